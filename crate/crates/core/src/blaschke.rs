//! Möbius transforms of the disc, finite Blaschke products, the
//! Malmquist–Takenaka basis and the boundary phases Ψ_b.
//!
//! Angles are radians on `[-π, π)`; the phase functions are defined for all
//! real `x` and satisfy `Ψ_b(x + 2π) = Ψ_b(x) + 2π`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{MtError, Result};

/// Denominators of the Möbius map below this modulus are treated as singular.
const SINGULAR_EPS: f64 = 1e-14;

/// A point of the open unit disc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Complex64", into = "Complex64")]
pub struct DiscPoint(Complex64);

impl DiscPoint {
    pub fn new(value: Complex64) -> Result<Self> {
        let modulus = value.norm();
        if !(modulus < 1.0) {
            return Err(MtError::OutsideDisc { value, modulus });
        }
        Ok(Self(value))
    }

    pub fn from_polar(radius: f64, angle: f64) -> Result<Self> {
        Self::new(Complex64::from_polar(radius, angle))
    }

    pub fn zero() -> Self {
        Self(Complex64::new(0.0, 0.0))
    }

    #[inline]
    pub fn value(&self) -> Complex64 {
        self.0
    }

    #[inline]
    pub fn modulus(&self) -> f64 {
        self.0.norm()
    }

    /// `arg b`, with the convention `arg 0 = 0`.
    #[inline]
    pub fn arg(&self) -> f64 {
        if self.0 == Complex64::new(0.0, 0.0) {
            0.0
        } else {
            self.0.arg()
        }
    }
}

impl TryFrom<Complex64> for DiscPoint {
    type Error = MtError;

    fn try_from(value: Complex64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<DiscPoint> for Complex64 {
    fn from(p: DiscPoint) -> Self {
        p.0
    }
}

/// Ordered finite pole sequence `a_1, ..., a_len`.
///
/// Indexing on the Rust side is zero-based: `poles.get(0)` is `a_1`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<DiscPoint>", into = "Vec<DiscPoint>")]
pub struct PoleSequence {
    poles: Vec<DiscPoint>,
    radius_bound: f64,
}

impl PoleSequence {
    pub fn new(poles: Vec<DiscPoint>) -> Self {
        let radius_bound = poles.iter().map(DiscPoint::modulus).fold(0.0, f64::max);
        Self {
            poles,
            radius_bound,
        }
    }

    pub fn from_complex(values: &[Complex64]) -> Result<Self> {
        let poles = values
            .iter()
            .map(|&v| DiscPoint::new(v))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(poles))
    }

    /// `count` copies of the origin: the classical Fourier system.
    pub fn fourier(count: usize) -> Self {
        Self::new(vec![DiscPoint::zero(); count])
    }

    pub fn len(&self) -> usize {
        self.poles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poles.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<DiscPoint> {
        self.poles.get(index).copied()
    }

    pub fn as_slice(&self) -> &[DiscPoint] {
        &self.poles
    }

    pub fn iter(&self) -> impl Iterator<Item = &DiscPoint> {
        self.poles.iter()
    }

    /// `max |a_j|` (zero for the empty sequence).
    pub fn radius_bound(&self) -> f64 {
        self.radius_bound
    }

    /// `Σ (1 - |a_j|)`, the finite part of the divergence condition.
    pub fn divergence_sum(&self) -> f64 {
        self.poles.iter().map(|p| 1.0 - p.modulus()).sum()
    }

    /// First `count` poles.
    pub fn prefix(&self, count: usize) -> Result<PoleSequence> {
        self.check_prefix(count)?;
        Ok(Self::new(self.poles[..count].to_vec()))
    }

    pub fn push(&mut self, pole: DiscPoint) {
        self.radius_bound = self.radius_bound.max(pole.modulus());
        self.poles.push(pole);
    }

    pub fn extend_from(&mut self, other: &PoleSequence) {
        for p in other.iter() {
            self.push(*p);
        }
    }

    /// Image of every pole under `z ↦ mobius(b, z)`.
    pub fn mapped(&self, b: DiscPoint) -> Result<PoleSequence> {
        let poles = self
            .poles
            .iter()
            .map(|a| DiscPoint::new(mobius(b, a.value())?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(poles))
    }

    pub(crate) fn check_prefix(&self, count: usize) -> Result<()> {
        if count > self.poles.len() {
            return Err(MtError::Index {
                requested: count,
                available: self.poles.len(),
            });
        }
        Ok(())
    }
}

impl From<PoleSequence> for Vec<DiscPoint> {
    fn from(p: PoleSequence) -> Self {
        p.poles
    }
}

impl From<Vec<DiscPoint>> for PoleSequence {
    fn from(poles: Vec<DiscPoint>) -> Self {
        Self::new(poles)
    }
}

impl<'a> IntoIterator for &'a PoleSequence {
    type Item = &'a DiscPoint;
    type IntoIter = std::slice::Iter<'a, DiscPoint>;

    fn into_iter(self) -> Self::IntoIter {
        self.poles.iter()
    }
}

/// `(z - b) / (1 - conj(b) z)`.
pub fn mobius(b: DiscPoint, z: Complex64) -> Result<Complex64> {
    let denom = Complex64::new(1.0, 0.0) - b.0.conj() * z;
    let modulus = denom.norm();
    if modulus < SINGULAR_EPS {
        return Err(MtError::Singular { z, modulus });
    }
    Ok((z - b.0) / denom)
}

/// Möbius map without the singularity check; callers guarantee |z| ≤ 1.
#[inline]
pub(crate) fn mobius_unchecked(b: Complex64, z: Complex64) -> Complex64 {
    (z - b) / (1.0 - b.conj() * z)
}

/// `B_n(z) = Π_{j ≤ n} mobius(a_j, z)`, with `B_0 ≡ 1`.
pub fn blaschke_product(poles: &PoleSequence, n: usize, z: Complex64) -> Result<Complex64> {
    poles.check_prefix(n)?;
    poles.poles[..n]
        .iter()
        .try_fold(Complex64::new(1.0, 0.0), |acc, &a| Ok(acc * mobius(a, z)?))
}

/// Malmquist–Takenaka function `φ_n(z) = B_n(z) √(1-|a_{n+1}|²) / (1 - conj(a_{n+1}) z)`.
pub fn mt_basis_eval(poles: &PoleSequence, n: usize, z: Complex64) -> Result<Complex64> {
    poles.check_prefix(n + 1)?;
    let next = poles.poles[n].0;
    let denom = 1.0 - next.conj() * z;
    if denom.norm() < SINGULAR_EPS {
        return Err(MtError::Singular {
            z,
            modulus: denom.norm(),
        });
    }
    let weight = (1.0 - next.norm_sqr()).sqrt();
    Ok(blaschke_product(poles, n, z)? * weight / denom)
}

/// `1 + r² - 2r cos u`, written as `(1-r)² + 4r sin²(u/2)` to keep precision near r = 1.
#[inline]
fn poisson_denominator(r: f64, u: f64) -> f64 {
    let s = (0.5 * u).sin();
    (1.0 - r) * (1.0 - r) + 4.0 * r * s * s
}

/// Boundary phase Ψ_b(x) with `mobius(b, e^{ix}) = e^{i(Ψ_b(x) + arg b)}`.
pub fn phase(b: DiscPoint, x: f64) -> f64 {
    let r = b.modulus();
    let u = x - b.arg();
    if r == 0.0 {
        return u;
    }
    let ratio = (r * u.sin() / poisson_denominator(r, u).sqrt()).clamp(-1.0, 1.0);
    u + 2.0 * ratio.asin()
}

/// Ψ_b'(x), the Poisson kernel `(1-|b|²) / |e^{ix} - b|²`.
pub fn phase_derivative(b: DiscPoint, x: f64) -> f64 {
    let r = b.modulus();
    (1.0 - r * r) / poisson_denominator(r, x - b.arg())
}

/// Ψ_b''(x).
pub fn phase_second_derivative(b: DiscPoint, x: f64) -> f64 {
    let r = b.modulus();
    let u = x - b.arg();
    let d = poisson_denominator(r, u);
    -2.0 * r * (1.0 - r * r) * u.sin() / (d * d)
}

/// θ_N(x) = Σ_{j ≤ N} Ψ_{a_j}(x).
pub fn accumulated_phase(poles: &PoleSequence, count: usize, x: f64) -> Result<f64> {
    poles.check_prefix(count)?;
    Ok(poles.poles[..count].iter().map(|&a| phase(a, x)).sum())
}

/// θ_N'(x).
pub fn accumulated_phase_derivative(poles: &PoleSequence, count: usize, x: f64) -> Result<f64> {
    poles.check_prefix(count)?;
    Ok(poles.poles[..count]
        .iter()
        .map(|&a| phase_derivative(a, x))
        .sum())
}

/// `θ_count(x)` at every point of `xs`.
pub(crate) fn accumulated_phase_samples(poles: &PoleSequence, count: usize, xs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; xs.len()];
    for &a in &poles.poles[..count] {
        for (acc, &x) in out.iter_mut().zip(xs) {
            *acc += phase(a, x);
        }
    }
    out
}

/// Winding number of `B_n` around the circle, from wrapped argument increments
/// of its values at `samples` equispaced points.
pub fn winding_number(poles: &PoleSequence, n: usize, samples: usize) -> Result<i64> {
    poles.check_prefix(n)?;
    let values = (0..=samples)
        .map(|m| {
            let x = -PI + 2.0 * PI * m as f64 / samples as f64;
            blaschke_product(poles, n, Complex64::from_polar(1.0, x))
        })
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = values.windows(2).map(|w| (w[1] / w[0]).arg()).sum();
    Ok((total / (2.0 * PI)).round() as i64)
}

/// One element `J^b_j = [c + t_lo, c + t_hi] ∪ [c - t_hi, c - t_lo]` of the
/// lacunary decomposition adapted to a pole with argument `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcPair {
    pub center_angle: f64,
    pub t_lo: f64,
    pub t_hi: f64,
}

impl ArcPair {
    /// Total arc length of both halves.
    pub fn measure(&self) -> f64 {
        2.0 * (self.t_hi - self.t_lo)
    }

    /// Whether the angle `x` (any real) lies in the pair.
    pub fn contains(&self, x: f64) -> bool {
        let d = wrap_angle(x - self.center_angle).abs();
        d >= self.t_lo && d <= self.t_hi
    }

    /// The two component arcs as `(start, end)` with `end > start`, not wrapped.
    pub fn arcs(&self) -> [(f64, f64); 2] {
        let c = self.center_angle;
        [(c + self.t_lo, c + self.t_hi), (c - self.t_hi, c - self.t_lo)]
    }
}

/// Reduce an angle to `[-π, π)`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y >= PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Number of lacunary arcs `N = floor(log2 1/(1-|b|))`.
pub fn lacunary_depth(b: DiscPoint) -> usize {
    let gap = 1.0 - b.modulus();
    (1.0 / gap).log2().floor().max(0.0) as usize
}

/// Lacunary decomposition of the circle adapted to `b`.
///
/// Breakpoints are `t_0 = 0`, `t_j = 2^j (1-|b|)` for `1 ≤ j < N`, `t_N = π`.
/// For `N ≤ 1` (that is `|b| < 3/4`) the decomposition is a single pair.
pub fn lacunary_arcs(b: DiscPoint) -> Vec<ArcPair> {
    let n = lacunary_depth(b);
    let gap = 1.0 - b.modulus();
    let center_angle = b.arg();
    if n <= 1 {
        return vec![ArcPair {
            center_angle,
            t_lo: 0.0,
            t_hi: PI,
        }];
    }
    let mut t: Vec<f64> = Vec::with_capacity(n + 1);
    t.push(0.0);
    t.extend((1..n).map(|j| (2f64).powi(j as i32) * gap));
    t.push(PI);
    t.windows(2)
        .map(|w| ArcPair {
            center_angle,
            t_lo: w[0],
            t_hi: w[1],
        })
        .collect()
}

/// Sampled `inf` and `sup` of Ψ_b' over one component arc of each lacunary
/// pair, `(j, inf, sup)`. Each arc gets `max(64, length/h)` interior samples
/// plus its endpoints.
pub fn arc_derivative_bounds(b: DiscPoint, h: f64) -> Vec<(usize, f64, f64)> {
    let rotated = DiscPoint(Complex64::new(b.modulus(), 0.0));
    lacunary_arcs(b)
        .iter()
        .enumerate()
        .map(|(j, arc)| {
            let len = arc.t_hi - arc.t_lo;
            let count = ((len / h).ceil() as usize).max(64);
            let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
            for i in 0..=count + 1 {
                let u = arc.t_lo + len * i as f64 / (count + 1) as f64;
                let d = phase_derivative(rotated, u);
                lo = lo.min(d);
                hi = hi.max(d);
            }
            (j, lo, hi)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn dp(re: f64, im: f64) -> DiscPoint {
        DiscPoint::new(c(re, im)).unwrap()
    }

    #[test]
    fn disc_point_rejects_boundary() {
        assert!(DiscPoint::new(c(1.0, 0.0)).is_err());
        assert!(DiscPoint::new(c(0.6, 0.8)).is_err());
        assert!(DiscPoint::new(c(f64::NAN, 0.0)).is_err());
        assert!(DiscPoint::new(c(0.6, 0.79)).is_ok());
    }

    #[test]
    fn pole_sequence_radius_bound() {
        let p = PoleSequence::from_complex(&[c(0.1, 0.0), c(0.0, -0.7), c(0.3, 0.3)]).unwrap();
        assert!((p.radius_bound() - 0.7).abs() < 1e-15);
        assert!(PoleSequence::from_complex(&[c(0.1, 0.0), c(1.5, 0.0)]).is_err());
        assert_eq!(PoleSequence::default().radius_bound(), 0.0);
    }

    #[test]
    fn mobius_examples() {
        let z = c(0.3, -0.4);
        assert_eq!(mobius(DiscPoint::zero(), z).unwrap(), z);

        let b = dp(0.5, 0.2);
        let w = mobius(b, Complex64::from_polar(1.0, 1.0)).unwrap();
        assert!((w.norm() - 1.0).abs() < 1e-15);

        let w = mobius(dp(0.5, 0.0), c(1.0, 0.0)).unwrap();
        assert!((w - c(1.0, 0.0)).norm() < 1e-15);

        let back = mobius(dp(-0.5, 0.0), w).unwrap();
        assert!((back - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn mobius_singularity_only_outside_disc() {
        let b = dp(0.5, 0.0);
        assert!(matches!(
            mobius(b, c(2.0, 0.0)),
            Err(MtError::Singular { .. })
        ));
    }

    #[test]
    fn blaschke_product_examples() {
        let fourier = PoleSequence::fourier(3);
        let z = c(0.4, 0.7);
        assert!((blaschke_product(&fourier, 3, z).unwrap() - z * z * z).norm() < 1e-15);
        assert_eq!(blaschke_product(&fourier, 0, z).unwrap(), c(1.0, 0.0));

        let half = PoleSequence::from_complex(&[c(0.5, 0.0)]).unwrap();
        assert!((blaschke_product(&half, 1, c(0.0, 0.0)).unwrap() - c(-0.5, 0.0)).norm() < 1e-15);
        assert!(matches!(
            blaschke_product(&half, 2, z),
            Err(MtError::Index {
                requested: 2,
                available: 1
            })
        ));
    }

    #[test]
    fn mt_basis_examples() {
        let fourier = PoleSequence::fourier(6);
        let z = Complex64::from_polar(1.0, 0.7);
        for n in 0..6 {
            let phi = mt_basis_eval(&fourier, n, z).unwrap();
            assert!((phi - z.powu(n as u32)).norm() < 1e-14);
        }
        let half = PoleSequence::from_complex(&[c(0.5, 0.0)]).unwrap();
        let phi0 = mt_basis_eval(&half, 0, c(0.0, 0.0)).unwrap();
        assert!((phi0 - c(0.75f64.sqrt(), 0.0)).norm() < 1e-15);
        assert!(mt_basis_eval(&half, 1, z).is_err());
    }

    #[test]
    fn phase_examples() {
        for &x in &[-3.0, -0.5, 0.0, 1.2, 3.1] {
            assert_eq!(phase(DiscPoint::zero(), x), x);
            assert_eq!(phase_derivative(DiscPoint::zero(), x), 1.0);
            assert_eq!(phase_second_derivative(DiscPoint::zero(), x), 0.0);
        }
        let b = dp(-0.3, 0.6);
        assert!(phase(b, b.arg()).abs() < 1e-15);
        assert_eq!(phase_second_derivative(b, b.arg()), 0.0);

        // b = 0.5, x = π: mobius(0.5, -1) = -1, so Ψ ≡ π mod 2π.
        let half = dp(0.5, 0.0);
        let psi = phase(half, PI);
        let image = mobius(half, c(-1.0, 0.0)).unwrap();
        let diff = wrap_angle(psi - image.arg());
        assert!(diff.abs() < 1e-12);
        assert!((psi - PI).abs() < 1e-12);
    }

    #[test]
    fn phase_derivative_examples() {
        let r = 0.5;
        assert!((phase_derivative(dp(r, 0.0), 0.0) - 3.0).abs() < 1e-14);
        let r = 0.8;
        assert!((phase_derivative(dp(r, 0.0), PI) - (1.0 - r) / (1.0 + r)).abs() < 1e-14);
    }

    fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let b = dp(0.9, 0.0);
        let x = 0.05;
        let fd = central_difference(|t| phase_derivative(b, t), x, 1e-6);
        let exact = phase_second_derivative(b, x);
        assert!(exact < 0.0);
        assert!(((exact - fd) / exact).abs() < 1e-6, "{exact} vs {fd}");

        for &(re, im) in &[(0.3, 0.1), (-0.7, 0.4), (0.05, -0.9)] {
            let b = dp(re, im);
            for k in 0..20 {
                let x = -PI + 0.31 * k as f64;
                let fd = central_difference(|t| phase(b, t), x, 1e-5);
                let exact = phase_derivative(b, x);
                assert!(((exact - fd) / exact).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn accumulated_phase_examples() {
        let poles = PoleSequence::from_complex(&[c(0.2, 0.1), c(-0.5, 0.5), c(0.0, -0.8)]).unwrap();
        assert_eq!(accumulated_phase(&poles, 0, 1.3).unwrap(), 0.0);
        let fourier = PoleSequence::fourier(5);
        assert!((accumulated_phase(&fourier, 5, 0.7).unwrap() - 3.5).abs() < 1e-14);
        for k in 0..25 {
            let x = -3.0 + 0.25 * k as f64;
            let fd = central_difference(|t| accumulated_phase(&poles, 3, t).unwrap(), x, 1e-5);
            let exact = accumulated_phase_derivative(&poles, 3, x).unwrap();
            assert!(((exact - fd) / exact).abs() < 1e-7);
        }
        assert!(accumulated_phase(&poles, 4, 0.0).is_err());
    }

    #[test]
    fn phase_representation_and_monotonicity() {
        for &(re, im) in &[(0.5, 0.2), (-0.95, 0.1), (0.0, 0.999), (0.3, -0.3)] {
            let b = dp(re, im);
            let r = b.modulus();
            let mut prev = f64::NEG_INFINITY;
            for m in 0..4096 {
                let x = -PI + 2.0 * PI * m as f64 / 4096.0;
                let lhs = Complex64::from_polar(1.0, phase(b, x) + b.arg());
                let rhs = mobius(b, Complex64::from_polar(1.0, x)).unwrap();
                assert!((lhs - rhs).norm() < 1e-10);
                let psi = phase(b, x);
                assert!(psi > prev);
                prev = psi;
                assert!(phase_derivative(b, x) > (1.0 - r) / 2.0);
            }
        }
    }

    #[test]
    fn winding_number_counts_poles() {
        let poles =
            PoleSequence::from_complex(&[c(0.2, 0.1), c(-0.5, 0.5), c(0.0, -0.8), c(0.7, 0.0)])
                .unwrap();
        for n in 0..=4 {
            assert_eq!(winding_number(&poles, n, 4096).unwrap(), n as i64);
        }
    }

    #[test]
    fn lacunary_examples() {
        let b = dp(1.0 - 1.0 / 16.0, 0.0);
        let arcs = lacunary_arcs(b);
        assert_eq!(arcs.len(), 4);
        let t: Vec<f64> = arcs.iter().map(|a| a.t_lo).chain([PI]).collect();
        assert_eq!(t, vec![0.0, 0.125, 0.25, 0.5, PI]);

        let arcs = lacunary_arcs(dp(0.5, 0.0));
        assert_eq!(arcs.len(), 1);
        assert_eq!((arcs[0].t_lo, arcs[0].t_hi), (0.0, PI));
    }

    #[test]
    fn lacunary_arcs_partition_circle() {
        for &(r, angle) in &[(0.9, 0.3), (0.999, -2.0), (1.0 - 2f64.powi(-12), 3.0), (0.6, 1.0)] {
            let b = DiscPoint::from_polar(r, angle).unwrap();
            let arcs = lacunary_arcs(b);
            let total: f64 = arcs.iter().map(ArcPair::measure).sum();
            assert!((total - 2.0 * PI).abs() < 1e-12);
            // every sample point (off the breakpoints) lies in exactly one pair
            for m in 0..1000 {
                let x = -PI + 2.0 * PI * (m as f64 + 0.37) / 1000.0;
                let hits = arcs.iter().filter(|a| a.contains(x)).count();
                assert_eq!(hits, 1, "x = {x}");
            }
        }
    }

    #[test]
    fn wrap_angle_range() {
        for &x in &[-10.0, -PI, 0.0, PI, 7.5, 100.0] {
            let y = wrap_angle(x);
            assert!((-PI..PI).contains(&y));
            assert!(((x - y) / (2.0 * PI)).fract().abs() < 1e-12 || ((x - y) / (2.0 * PI)).fract().abs() > 1.0 - 1e-12);
        }
    }
}
