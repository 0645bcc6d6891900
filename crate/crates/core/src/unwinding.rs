//! Blaschke factorization of polynomials and the iterated unwinding series
//! `F = F(0) + F_1(0) B + F_2(0) B B_1 + ...`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::blaschke::{mobius_unchecked, DiscPoint, PoleSequence};
use crate::error::{MtError, Result};
use crate::poly::{poly_roots, Poly};
use crate::series::{CircleFunction, CircleGrid};

/// Roots closer than this to the unit circle abort the factorization.
pub const BOUNDARY_TOL: f64 = 1e-8;

const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Result of one factorization step `F = F(0) + B · F_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlaschkeFactorization {
    pub value_at_zero: Complex64,
    /// Zeros of `F - F(0)` inside the disc, with multiplicity.
    pub inner: PoleSequence,
    /// Zero-free (in the disc) outer part.
    pub outer: Poly,
}

/// Factor `F - F(0) = B · F_1` with `B` the Blaschke product over the zeros
/// of `F - F(0)` in the disc. `step` only labels boundary-root errors.
pub fn blaschke_factorize_step(f: &Poly, step: usize) -> Result<BlaschkeFactorization> {
    if f.is_constant() {
        return Err(MtError::Argument(
            "Blaschke factorization needs a non-constant polynomial".into(),
        ));
    }
    let value_at_zero = f.coefficients()[0];
    let g = f.without_constant();
    let roots = poly_roots(&g)?;
    let mut inner = Vec::new();
    let mut outer = Poly::constant(g.leading());
    for root in roots {
        let modulus = root.norm();
        if (modulus - 1.0).abs() < BOUNDARY_TOL {
            return Err(MtError::BoundaryRoot {
                root,
                tolerance: BOUNDARY_TOL,
                step,
            });
        }
        if modulus < 1.0 {
            inner.push(DiscPoint::new(root)?);
            if root != Complex64::new(0.0, 0.0) {
                outer = outer.mul(&Poly::new(vec![ONE, -root.conj()]));
            }
        } else {
            outer = outer.mul(&Poly::new(vec![-root, ONE]));
        }
    }
    Ok(BlaschkeFactorization {
        value_at_zero,
        inner: PoleSequence::new(inner),
        outer,
    })
}

/// [`blaschke_factorize_step`] at step 0.
pub fn blaschke_factorize(f: &Poly) -> Result<BlaschkeFactorization> {
    blaschke_factorize_step(f, 0)
}

/// One term `F_k(0)` together with the zeros of the factor `B_k` peeled at step k.
#[derive(Debug, Clone, PartialEq)]
pub struct UnwindingTerm {
    pub constant: Complex64,
    pub factor_poles: PoleSequence,
}

/// Why the iteration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The requested number of factorizations was performed.
    DepthReached,
    /// A residual became constant; the series is exact.
    ConstantResidual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnwindingDecomposition {
    pub terms: Vec<UnwindingTerm>,
    /// `F_K` after the last factorization (zero when the series terminated).
    pub residual: Poly,
    pub stop: StopReason,
    /// Number of factorizations performed.
    pub steps: usize,
}

/// Iterated factorization of `f`, at most `depth` steps.
pub fn unwinding_series(f: &Poly, depth: usize) -> Result<UnwindingDecomposition> {
    if depth == 0 {
        return Err(MtError::Argument("unwinding depth must be at least 1".into()));
    }
    let mut terms = Vec::new();
    let mut current = f.clone();
    let mut steps = 0;
    while steps < depth {
        if current.is_constant() {
            terms.push(UnwindingTerm {
                constant: current.coefficients().first().copied().unwrap_or_default(),
                factor_poles: PoleSequence::default(),
            });
            return Ok(UnwindingDecomposition {
                terms,
                residual: Poly::zero(),
                stop: StopReason::ConstantResidual,
                steps,
            });
        }
        let fac = blaschke_factorize_step(&current, steps)?;
        terms.push(UnwindingTerm {
            constant: fac.value_at_zero,
            factor_poles: fac.inner,
        });
        current = fac.outer;
        steps += 1;
    }
    if current.is_constant() {
        terms.push(UnwindingTerm {
            constant: current.coefficients().first().copied().unwrap_or_default(),
            factor_poles: PoleSequence::default(),
        });
        return Ok(UnwindingDecomposition {
            terms,
            residual: Poly::zero(),
            stop: StopReason::ConstantResidual,
            steps,
        });
    }
    Ok(UnwindingDecomposition {
        terms,
        residual: current,
        stop: StopReason::DepthReached,
        steps,
    })
}

impl UnwindingDecomposition {
    /// `S_K(z) = Σ_{k<K} F_k(0) Π_{i<k} B_i(z)`.
    pub fn partial_sum(&self, terms: usize, z: Complex64) -> Complex64 {
        let mut product = ONE;
        let mut acc = Complex64::new(0.0, 0.0);
        for term in self.terms.iter().take(terms) {
            acc += term.constant * product;
            for a in term.factor_poles.iter() {
                product *= mobius_unchecked(a.value(), z);
            }
        }
        acc
    }

    /// `S_K` plus the remainder `Π_{i<steps} B_i · residual`; reproduces `F`.
    pub fn reconstruct(&self, z: Complex64) -> Complex64 {
        let mut product = ONE;
        for term in &self.terms {
            for a in term.factor_poles.iter() {
                product *= mobius_unchecked(a.value(), z);
            }
        }
        self.partial_sum(self.terms.len(), z) + product * self.residual.eval(z)
    }

    /// Number of MT poles consumed by the first `terms` terms.
    pub fn cumulative_cut(&self, terms: usize) -> usize {
        self.terms
            .iter()
            .take(terms)
            .map(|t| t.factor_poles.len())
            .sum()
    }

    /// All factor poles of the first `terms` terms, in peel order.
    pub fn cumulative_poles(&self, terms: usize) -> PoleSequence {
        let mut poles = PoleSequence::default();
        for term in self.terms.iter().take(terms) {
            poles.extend_from(&term.factor_poles);
        }
        poles
    }

    /// Partial sum `S_K` sampled on a grid.
    pub fn partial_sum_on(&self, terms: usize, grid: CircleGrid) -> CircleFunction {
        CircleFunction::from_boundary(grid, |z| self.partial_sum(terms, z))
    }

    /// `(K, max_grid |F - S_K|)` for `K = 1..=terms.len()`.
    pub fn error_table(&self, f: &Poly, grid: CircleGrid) -> Vec<(usize, f64)> {
        let points = grid.circle_points();
        let values: Vec<Complex64> = points.iter().map(|&z| f.eval(z)).collect();
        (1..=self.terms.len())
            .map(|k| {
                let err = points
                    .iter()
                    .zip(&values)
                    .map(|(&z, &v)| (v - self.partial_sum(k, z)).norm())
                    .fold(0.0, f64::max);
                (k, err)
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&DecompositionJson::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: DecompositionJson = serde_json::from_str(text)?;
        raw.try_into()
    }
}

/// Concatenation of all factor poles in peel order.
pub fn unwinding_to_mt_poles(dec: &UnwindingDecomposition) -> Result<PoleSequence> {
    if dec.terms.is_empty() {
        return Err(MtError::Argument("decomposition has no terms".into()));
    }
    Ok(dec.cumulative_poles(dec.terms.len()))
}

#[derive(Debug, Serialize, Deserialize)]
struct ComplexJson {
    re: f64,
    im: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TermJson {
    constant_re: f64,
    constant_im: f64,
    /// Zeros of the factor peeled at this step.
    poles: Vec<ComplexJson>,
    /// Zeros of the product of all factors peeled up to and including this step.
    #[serde(default)]
    cumulative_poles: Vec<ComplexJson>,
}

fn complex_list(poles: &PoleSequence) -> Vec<ComplexJson> {
    poles
        .iter()
        .map(|p| ComplexJson {
            re: p.value().re,
            im: p.value().im,
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct DecompositionJson {
    terms: Vec<TermJson>,
    residual: Vec<ComplexJson>,
    stop_reason: StopReason,
    steps: usize,
}

impl From<&UnwindingDecomposition> for DecompositionJson {
    fn from(d: &UnwindingDecomposition) -> Self {
        Self {
            terms: d
                .terms
                .iter()
                .enumerate()
                .map(|(k, t)| TermJson {
                    constant_re: t.constant.re,
                    constant_im: t.constant.im,
                    poles: complex_list(&t.factor_poles),
                    cumulative_poles: complex_list(&d.cumulative_poles(k + 1)),
                })
                .collect(),
            residual: d
                .residual
                .coefficients()
                .iter()
                .map(|c| ComplexJson { re: c.re, im: c.im })
                .collect(),
            stop_reason: d.stop,
            steps: d.steps,
        }
    }
}

impl TryFrom<DecompositionJson> for UnwindingDecomposition {
    type Error = MtError;

    fn try_from(raw: DecompositionJson) -> Result<Self> {
        let terms = raw
            .terms
            .into_iter()
            .map(|t| {
                let poles: Vec<Complex64> =
                    t.poles.iter().map(|p| Complex64::new(p.re, p.im)).collect();
                Ok(UnwindingTerm {
                    constant: Complex64::new(t.constant_re, t.constant_im),
                    factor_poles: PoleSequence::from_complex(&poles)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            terms,
            residual: Poly::new(raw.residual.iter().map(|c| Complex64::new(c.re, c.im)).collect()),
            stop: raw.stop_reason,
            steps: raw.steps,
        })
    }
}
