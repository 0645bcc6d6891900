//! Dense complex polynomials and a simultaneous root finder.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{MtError, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Polynomial with complex coefficients in ascending degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Complex64>", into = "Vec<Complex64>")]
pub struct Poly {
    coefficients: Vec<Complex64>,
}

impl Poly {
    /// Builds a polynomial; exactly-zero leading coefficients are dropped.
    pub fn new(mut coefficients: Vec<Complex64>) -> Self {
        while coefficients.last() == Some(&ZERO) {
            coefficients.pop();
        }
        Self { coefficients }
    }

    pub fn zero() -> Self {
        Self {
            coefficients: Vec::new(),
        }
    }

    pub fn constant(c: Complex64) -> Self {
        Self::new(vec![c])
    }

    pub fn from_real(coefficients: &[f64]) -> Self {
        Self::new(coefficients.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    /// `lead · Π (z - ρ)`.
    pub fn from_roots(lead: Complex64, roots: &[Complex64]) -> Self {
        roots.iter().fold(Self::constant(lead), |p, &r| {
            p.mul(&Poly::new(vec![-r, ONE]))
        })
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// Degree; the zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    pub fn is_constant(&self) -> bool {
        self.coefficients.len() <= 1
    }

    pub fn leading(&self) -> Complex64 {
        self.coefficients.last().copied().unwrap_or(ZERO)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coefficients
            .iter()
            .rev()
            .fold(ZERO, |acc, &c| acc * z + c)
    }

    /// Value and first derivative by Horner's scheme.
    pub fn eval_with_derivative(&self, z: Complex64) -> (Complex64, Complex64) {
        let mut p = ZERO;
        let mut dp = ZERO;
        for &c in self.coefficients.iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        (p, dp)
    }

    /// Euclidean norm of the coefficient vector.
    pub fn coefficient_norm(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![ZERO; self.coefficients.len() + other.coefficients.len() - 1];
        for (i, &a) in self.coefficients.iter().enumerate() {
            for (j, &b) in other.coefficients.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }

    /// `p(z) - p(0)`.
    pub fn without_constant(&self) -> Poly {
        let mut c = self.coefficients.clone();
        if let Some(first) = c.first_mut() {
            *first = ZERO;
        }
        Poly::new(c)
    }
}

impl From<Vec<Complex64>> for Poly {
    fn from(c: Vec<Complex64>) -> Self {
        Poly::new(c)
    }
}

impl From<Poly> for Vec<Complex64> {
    fn from(p: Poly) -> Self {
        p.coefficients
    }
}

const ABERTH_MAX_ITER: usize = 500;
const NEWTON_POLISH_STEPS: usize = 8;

/// All roots with multiplicity, sorted by modulus and then by argument.
///
/// Exact zero roots are split off from trailing zero coefficients; the rest
/// come from Aberth–Ehrlich iteration followed by Newton polishing.
pub fn poly_roots(p: &Poly) -> Result<Vec<Complex64>> {
    if p.is_zero() {
        return Err(MtError::Argument("the zero polynomial has no finite root set".into()));
    }
    if p.degree() == 0 {
        return Err(MtError::Argument("constant polynomial has no roots".into()));
    }
    let zeros = p.coefficients.iter().take_while(|&&c| c == ZERO).count();
    let reduced = Poly::new(p.coefficients[zeros..].to_vec());
    let mut roots = vec![ZERO; zeros];
    roots.extend(aberth(&reduced));
    let scale = p.coefficient_norm();
    for root in roots.iter_mut().skip(zeros) {
        newton_polish(p, root, scale);
    }
    sort_roots(&mut roots);
    Ok(roots)
}

fn sort_roots(roots: &mut [Complex64]) {
    roots.sort_by(|a, b| {
        a.norm()
            .total_cmp(&b.norm())
            .then_with(|| a.arg().total_cmp(&b.arg()))
    });
}

fn aberth(p: &Poly) -> Vec<Complex64> {
    let n = p.degree();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![-p.coefficients[0] / p.coefficients[1]];
    }
    let lead = p.leading().norm();
    // Cauchy-type radius bound for the initial circle.
    let radius = p.coefficients[..n]
        .iter()
        .enumerate()
        .map(|(k, c)| (c.norm() / lead).powf(1.0 / (n - k) as f64))
        .fold(0.0, f64::max)
        .max(1e-3);
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(radius, 2.0 * PI * k as f64 / n as f64 + 0.4))
        .collect();
    for _ in 0..ABERTH_MAX_ITER {
        let mut max_step = 0.0_f64;
        for i in 0..n {
            let (val, der) = p.eval_with_derivative(z[i]);
            if val == ZERO {
                continue;
            }
            let ratio = val / der;
            let repulsion: Complex64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| ONE / (z[i] - z[j]))
                .sum();
            let step = ratio / (ONE - ratio * repulsion);
            if step.is_finite() {
                z[i] -= step;
                max_step = max_step.max(step.norm() / (1.0 + z[i].norm()));
            }
        }
        if max_step < 1e-15 {
            break;
        }
    }
    z
}

fn newton_polish(p: &Poly, root: &mut Complex64, scale: f64) {
    for _ in 0..NEWTON_POLISH_STEPS {
        let (val, der) = p.eval_with_derivative(*root);
        if val.norm() <= 1e-15 * scale || der == ZERO {
            break;
        }
        let next = *root - val / der;
        if !next.is_finite() || p.eval(next).norm() >= val.norm() {
            break;
        }
        *root = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn trims_leading_zeros() {
        let p = Poly::new(vec![c(1.0, 0.0), c(2.0, 0.0), ZERO, ZERO]);
        assert_eq!(p.degree(), 1);
        assert!(Poly::new(vec![ZERO]).is_zero());
    }

    #[test]
    fn horner_derivative() {
        let p = Poly::from_real(&[1.0, -3.0, 0.0, 2.0]);
        let z = c(0.3, -1.1);
        let (v, d) = p.eval_with_derivative(z);
        assert!((v - (1.0 - 3.0 * z + 2.0 * z * z * z)).norm() < 1e-14);
        assert!((d - (-3.0 + 6.0 * z * z)).norm() < 1e-14);
    }

    #[test]
    fn roots_examples() {
        let r = poly_roots(&Poly::from_real(&[-1.0, 0.0, 1.0])).unwrap();
        assert!((r[0] - c(1.0, 0.0)).norm() < 1e-12 || (r[0] - c(-1.0, 0.0)).norm() < 1e-12);
        let mut re: Vec<f64> = r.iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        assert!((re[0] + 1.0).abs() < 1e-12 && (re[1] - 1.0).abs() < 1e-12);

        assert_eq!(poly_roots(&Poly::from_real(&[0.0, 0.0, 1.0])).unwrap(), vec![ZERO, ZERO]);

        let r = poly_roots(&Poly::from_real(&[0.75, -2.8, 1.0])).unwrap();
        assert!((r[0] - c(0.3, 0.0)).norm() < 1e-10);
        assert!((r[1] - c(2.5, 0.0)).norm() < 1e-10);

        assert!(poly_roots(&Poly::zero()).is_err());
        assert!(poly_roots(&Poly::constant(c(2.0, 0.0))).is_err());
    }

    #[test]
    fn ordering_is_by_modulus_then_argument() {
        let roots = [c(0.0, 1.0), c(-1.0, 0.0), c(0.5, 0.0), c(2.0, 0.0)];
        let p = Poly::from_roots(c(1.5, -0.5), &roots);
        let found = poly_roots(&p).unwrap();
        let expected = [c(0.5, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(2.0, 0.0)];
        for (f, e) in found.iter().zip(&expected) {
            assert!((f - e).norm() < 1e-10, "{found:?}");
        }
    }
}
