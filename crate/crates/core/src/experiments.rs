//! Linearized maximal operators `T f(x) = ∫ f(y) e^{-iθ_{N(x)}(y)} K(x-y) dy`,
//! their discrete L² norms, the rotated-pole lower-bound construction and
//! the norm sweeps.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blaschke::{mobius_unchecked, phase, wrap_angle, DiscPoint, PoleSequence};
use crate::error::{MtError, Result};
use crate::fixtures;
use crate::linalg::{largest_singular_value, CMatrix, LinearOperator};
use crate::series::{CircleFunction, CircleGrid, KernelKind, MAX_GRID, MIN_GRID};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Quadrature weight attached to each column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `dy / 2π`, weight `1/n`.
    Normalized,
    /// `dy`, weight `2π/n`.
    Unnormalized,
}

impl Normalization {
    pub fn weight(self, n: usize) -> f64 {
        match self {
            Normalization::Normalized => 1.0 / n as f64,
            Normalization::Unnormalized => 2.0 * PI / n as f64,
        }
    }

    /// Squared L² norm of samples in this measure.
    pub fn norm_sq(self, samples: &[Complex64]) -> f64 {
        self.weight(samples.len()) * samples.iter().map(|s| s.norm_sqr()).sum::<f64>()
    }
}

/// Piecewise-constant prefix length `N(x)`: `values[i]` on
/// `[breakpoints[i], breakpoints[i+1])`, the last value wrapping around to
/// the first breakpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceFunction {
    breakpoints: Vec<f64>,
    values: Vec<usize>,
}

impl ChoiceFunction {
    pub fn new(breakpoints: Vec<f64>, values: Vec<usize>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(MtError::Argument(format!(
                "choice function needs matching nonempty breakpoints and values ({} vs {})",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints.iter().any(|b| !(-PI..PI).contains(b))
            || breakpoints.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(MtError::Argument(
                "breakpoints must be strictly increasing inside [-π, π)".into(),
            ));
        }
        Ok(Self { breakpoints, values })
    }

    pub fn constant(value: usize) -> Self {
        Self {
            breakpoints: vec![-PI],
            values: vec![value],
        }
    }

    /// Random piecewise-constant choice with `pieces` pieces and values in `0..=max_value`.
    pub fn random(rng: &mut impl Rng, pieces: usize, max_value: usize) -> Self {
        let pieces = pieces.max(1);
        let mut breakpoints: Vec<f64> = (0..pieces).map(|_| -PI + 2.0 * PI * rng.random::<f64>()).collect();
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup();
        let values = breakpoints.iter().map(|_| rng.random_range(0..=max_value)).collect();
        Self { breakpoints, values }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn max_value(&self) -> usize {
        self.values.iter().copied().max().unwrap_or(0)
    }

    pub fn eval(&self, x: f64) -> usize {
        let x = wrap_angle(x);
        let i = self.breakpoints.partition_point(|&b| b <= x);
        if i == 0 {
            *self.values.last().expect("nonempty")
        } else {
            self.values[i - 1]
        }
    }

    /// `N'(u) = N(x(u))` with `e^{ix(u)} = m_b(e^{iu})`; breakpoints move to
    /// `m_{-b}` of the old ones and the cyclic order is kept.
    pub fn transported(&self, b: DiscPoint) -> Result<Self> {
        let minus_b = DiscPoint::new(-b.value())?;
        let mut pairs: Vec<(f64, usize)> = self
            .breakpoints
            .iter()
            .zip(&self.values)
            .map(|(&x, &v)| (wrap_angle(mobius_unchecked(minus_b.value(), Complex64::from_polar(1.0, x)).arg()), v))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (breakpoints, values) = pairs.into_iter().unzip();
        Self::new(breakpoints, values)
    }

    fn check(&self, poles: &PoleSequence) -> Result<()> {
        if self.max_value() > poles.len() {
            return Err(MtError::Argument(format!(
                "choice value {} exceeds the {} available poles",
                self.max_value(),
                poles.len()
            )));
        }
        Ok(())
    }
}

/// Dense discretization of the linearized operator. Rows sit on the
/// staggered copy of the column grid so that `x - y` never vanishes.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub entries: CMatrix,
    pub row_grid: CircleGrid,
    pub col_grid: CircleGrid,
    pub kernel: KernelKind,
    pub convention: Normalization,
}

impl OperatorMatrix {
    pub fn apply(&self, f: &CircleFunction) -> Result<CircleFunction> {
        if f.grid() != self.col_grid {
            return Err(MtError::Shape("input must live on the column grid".into()));
        }
        CircleFunction::new(self.row_grid, self.entries.apply(f.samples()))
    }

    pub fn apply_adjoint(&self, g: &CircleFunction) -> Result<CircleFunction> {
        if g.grid() != self.row_grid {
            return Err(MtError::Shape("input must live on the row grid".into()));
        }
        CircleFunction::new(self.col_grid, self.entries.apply_adjoint(g.samples()))
    }
}

/// `e^{-iθ_k(y_l)}` for every prefix length `k` used by `choice`.
fn modulation_rows(poles: &PoleSequence, needed: &[bool], ys: &[f64]) -> Vec<Option<Vec<Complex64>>> {
    let mut theta = vec![0.0; ys.len()];
    let mut rows = Vec::with_capacity(needed.len());
    for k in 0..needed.len() {
        if k > 0 {
            let a = poles.as_slice()[k - 1];
            theta.par_iter_mut().zip(ys).for_each(|(t, &y)| *t += phase(a, y));
        }
        rows.push(needed[k].then(|| theta.iter().map(|&t| Complex64::from_polar(1.0, -t)).collect()));
    }
    rows
}

/// `entry(m, l) = w · e^{-iθ_{N(x_m)}(y_l)} · K(x_m - y_l)` with normalized weights.
pub fn build_linearized(
    poles: &PoleSequence,
    choice: &ChoiceFunction,
    grid: CircleGrid,
    kernel: KernelKind,
) -> Result<OperatorMatrix> {
    build_linearized_with(poles, choice, grid, kernel, Normalization::Normalized)
}

pub fn build_linearized_with(
    poles: &PoleSequence,
    choice: &ChoiceFunction,
    grid: CircleGrid,
    kernel: KernelKind,
    convention: Normalization,
) -> Result<OperatorMatrix> {
    let stacked = build_stacked(poles, std::slice::from_ref(choice), grid, kernel, convention)?;
    Ok(stacked)
}

/// Rows of the operators for several choice functions stacked vertically;
/// `‖stacked‖ ≥ max_N ‖T_N‖`, and the norm grows as choices are added.
pub fn build_stacked(
    poles: &PoleSequence,
    choices: &[ChoiceFunction],
    grid: CircleGrid,
    kernel: KernelKind,
    convention: Normalization,
) -> Result<OperatorMatrix> {
    if choices.is_empty() {
        return Err(MtError::Argument("at least one choice function is needed".into()));
    }
    for c in choices {
        c.check(poles)?;
    }
    let row_grid = grid.flipped();
    let ys = grid.nodes();
    let xs = row_grid.nodes();
    let n = grid.len();
    let mut needed = vec![false; poles.len() + 1];
    let row_choice: Vec<usize> = choices
        .iter()
        .flat_map(|c| xs.iter().map(move |&x| c.eval(x)))
        .collect();
    for &k in &row_choice {
        needed[k] = true;
    }
    let modulations = modulation_rows(poles, &needed, &ys);
    let w = convention.weight(n);
    let rows: Vec<Vec<Complex64>> = row_choice
        .par_iter()
        .enumerate()
        .map(|(i, &k)| {
            let x = xs[i % n];
            let modulation = modulations[k].as_ref().expect("precomputed");
            ys.iter()
                .zip(modulation)
                .map(|(&y, &e)| e * kernel.eval(x - y) * w)
                .collect()
        })
        .collect();
    let entries = CMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    Ok(OperatorMatrix {
        entries,
        row_grid,
        col_grid: grid,
        kernel,
        convention,
    })
}

/// Largest singular value of the discretized operator (seeded power iteration).
pub fn l2_operator_norm(a: &OperatorMatrix) -> Result<f64> {
    Ok(largest_singular_value(&a.entries, 0)?.value)
}

/// `T* g(y) = Σ_x w e^{iθ_{N(x)}(y)} conj K(x - y) g(x)`, summing only over the
/// support of `g`; `g` lives on the row grid and the result on the column grid.
pub fn adjoint_apply(
    g: &CircleFunction,
    poles: &PoleSequence,
    choice: &ChoiceFunction,
    kernel: KernelKind,
    convention: Normalization,
) -> Result<CircleFunction> {
    Ok(adjoint_apply_accounted(g, poles, choice, kernel, convention)?.0)
}

/// [`adjoint_apply`] together with the diagonal part `Σ_N ‖T*_N g_N‖²`, where
/// `g_N` is the restriction of `g` to `{N(x) = N}`.
fn adjoint_apply_accounted(
    g: &CircleFunction,
    poles: &PoleSequence,
    choice: &ChoiceFunction,
    kernel: KernelKind,
    convention: Normalization,
) -> Result<(CircleFunction, f64)> {
    choice.check(poles)?;
    let row_grid = g.grid();
    let col_grid = row_grid.flipped();
    let n = row_grid.len();
    let w = convention.weight(n);
    let xs = row_grid.nodes();
    // Support grouped by choice value, in increasing value.
    let mut groups: Vec<(usize, Vec<(f64, Complex64)>)> = Vec::new();
    for (m, &s) in g.samples().iter().enumerate() {
        if s == ZERO {
            continue;
        }
        let k = choice.eval(xs[m]);
        match groups.iter_mut().find(|(v, _)| *v == k) {
            Some((_, members)) => members.push((xs[m], s)),
            None => groups.push((k, vec![(xs[m], s)])),
        }
    }
    groups.sort_by_key(|(k, _)| *k);
    let top = groups.last().map_or(0, |(k, _)| *k);
    let pole_slice = &poles.as_slice()[..top];
    let ys = col_grid.nodes();
    let out: Vec<(Complex64, f64)> = ys
        .par_iter()
        .map(|&y| {
            let mut theta = 0.0;
            let mut used = 0;
            let mut total = ZERO;
            let mut diagonal = 0.0;
            for (k, members) in &groups {
                while used < *k {
                    theta += phase(pole_slice[used], y);
                    used += 1;
                }
                let inner: Complex64 = members
                    .iter()
                    .map(|&(x, s)| kernel.eval(x - y).conj() * s)
                    .sum::<Complex64>()
                    * w;
                let part = Complex64::from_polar(1.0, theta) * inner;
                total += part;
                diagonal += part.norm_sqr();
            }
            (total, diagonal)
        })
        .collect();
    let (samples, diag): (Vec<Complex64>, Vec<f64>) = out.into_iter().unzip();
    let diagonal = convention.weight(n) * diag.iter().sum::<f64>();
    Ok((CircleFunction::new(col_grid, samples)?, diagonal))
}

/// Root of `M e^M = 1/(1-r)` by bisection.
pub fn choose_m(r: f64) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(MtError::Argument(format!("r = {r} must lie in (0, 1)")));
    }
    let target = 1.0 / (1.0 - r);
    let (mut lo, mut hi) = (0.0_f64, target.ln().max(1.0));
    while (hi - lo) > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if mid * mid.exp() < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Smallest `r` handled by [`counterexample`].
pub const CONSTRUCTION_MIN_R: f64 = 1.0 - 0.125;
/// Required grid samples inside each support interval of the test function.
pub const MIN_SAMPLES_PER_INTERVAL: usize = 32;

/// Rotated-pole configuration `a_k = r e^{iMk(1-r)}`, `0 ≤ k ≤ floor(e^M)`,
/// with the block choice function and the indicator test function.
#[derive(Debug, Clone)]
pub struct Counterexample {
    pub r: f64,
    pub m: f64,
    pub poles: PoleSequence,
    pub choice: ChoiceFunction,
    /// Test function on the row (staggered) grid.
    pub g: CircleFunction,
    pub kernel: KernelKind,
    /// `(k, lo, hi)` for every support interval `I_k`.
    pub intervals: Vec<(usize, f64, f64)>,
}

impl Counterexample {
    /// Length `M(1-r)` of the blocks `J_k`.
    pub fn block_width(&self) -> f64 {
        self.m * (1.0 - self.r)
    }

    /// Largest block index `floor(e^M)`.
    pub fn block_count(&self) -> usize {
        self.poles.len() - 1
    }
}

/// Samples of the half-step grid of size `n` inside `[lo, hi]`.
fn staggered_samples(n: usize, lo: f64, hi: f64) -> usize {
    let h = 2.0 * PI / n as f64;
    let first = ((lo + PI) / h - 0.5).ceil() as i64;
    let last = ((hi + PI) / h - 0.5).floor() as i64;
    (last - first + 1).max(0) as usize
}

fn support_intervals(r: f64, m: f64) -> Vec<(usize, f64, f64)> {
    let width = m * (1.0 - r);
    let blocks = m.exp().floor() as usize;
    (1..=blocks)
        .filter(|k| k % 2 == 0)
        .map(|k| {
            let k_f = k as f64;
            (k, (k_f + 0.25) * width, (k_f + 0.75) * width)
        })
        .collect()
}

/// Smallest admissible grid resolving every support interval.
pub fn required_grid(r: f64) -> Result<usize> {
    if !(CONSTRUCTION_MIN_R..1.0).contains(&r) {
        return Err(MtError::Precondition(format!(
            "r = {r} is outside the construction regime [{CONSTRUCTION_MIN_R}, 1)"
        )));
    }
    let m = choose_m(r)?;
    let intervals = support_intervals(r, m);
    let fits = |n: usize| {
        intervals
            .iter()
            .all(|&(_, lo, hi)| staggered_samples(n, lo, hi) >= MIN_SAMPLES_PER_INTERVAL)
    };
    let mut n = MIN_GRID;
    while !fits(n) {
        if n >= MAX_GRID {
            let width = 0.5 * m * (1.0 - r);
            let needed = (MIN_SAMPLES_PER_INTERVAL as f64 + 1.0) * 2.0 * PI / width;
            return Err(MtError::Resolution {
                grid: MAX_GRID,
                required: (needed.ceil() as usize).next_power_of_two(),
            });
        }
        n *= 2;
    }
    Ok(n)
}

/// The construction on the smallest resolving grid.
pub fn counterexample(r: f64) -> Result<Counterexample> {
    counterexample_on(r, CircleGrid::new(required_grid(r)?)?)
}

/// The construction with `grid` as column grid; `g` lives on its staggered copy.
pub fn counterexample_on(r: f64, grid: CircleGrid) -> Result<Counterexample> {
    let required = required_grid(r)?;
    let m = choose_m(r)?;
    let intervals = support_intervals(r, m);
    let row_grid = grid.flipped();
    let n = grid.len();
    if intervals
        .iter()
        .any(|&(_, lo, hi)| staggered_samples(n, lo, hi) < MIN_SAMPLES_PER_INTERVAL)
    {
        return Err(MtError::Resolution { grid: n, required });
    }
    let width = m * (1.0 - r);
    let blocks = m.exp().floor() as usize;
    let poles = (0..=blocks)
        .map(|k| DiscPoint::from_polar(r, m * k as f64 * (1.0 - r)))
        .collect::<Result<Vec<_>>>()?;
    // θ_k in the zero-based enumeration is the prefix of length k + 1.
    let mut breakpoints: Vec<f64> = (1..=blocks + 1).map(|k| k as f64 * width).collect();
    let mut values: Vec<usize> = (1..=blocks).map(|k| k + 1).collect();
    values.push(2);
    if breakpoints.last().is_some_and(|&b| b >= PI) {
        breakpoints.pop();
        values.pop();
    }
    let choice = ChoiceFunction::new(breakpoints, values)?;
    let g = CircleFunction::from_fn(row_grid, |x| {
        if intervals.iter().any(|&(_, lo, hi)| x >= lo && x <= hi) {
            Complex64::new(1.0, 0.0)
        } else {
            ZERO
        }
    });
    Ok(Counterexample {
        r,
        m,
        poles: PoleSequence::new(poles),
        choice,
        g,
        kernel: KernelKind::Cosecant,
        intervals,
    })
}

/// Norms of one run of the construction, all in the measure `dx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBoundMeasurement {
    pub g_norm_sq: f64,
    pub adjoint_norm_sq: f64,
    pub diagonal: f64,
    pub off_diagonal: f64,
}

impl LowerBoundMeasurement {
    pub fn ratio_sq(&self) -> f64 {
        self.adjoint_norm_sq / self.g_norm_sq
    }
}

/// `‖T*g‖²`, `‖g‖²` and the diagonal/off-diagonal split of `‖T*g‖²`.
pub fn measure_counterexample(ce: &Counterexample) -> Result<LowerBoundMeasurement> {
    measure_counterexample_with(ce, ce.kernel)
}

pub fn measure_counterexample_with(ce: &Counterexample, kernel: KernelKind) -> Result<LowerBoundMeasurement> {
    let conv = Normalization::Unnormalized;
    let (tg, diagonal) = adjoint_apply_accounted(&ce.g, &ce.poles, &ce.choice, kernel, conv)?;
    let adjoint_norm_sq = conv.norm_sq(tg.samples());
    Ok(LowerBoundMeasurement {
        g_norm_sq: conv.norm_sq(ce.g.samples()),
        adjoint_norm_sq,
        diagonal,
        off_diagonal: adjoint_norm_sq - diagonal,
    })
}

/// `(diagonal, off-diagonal)` assembled from every pair of intervals by
/// explicit inner products of the per-interval pieces of `T*g`. Intended for
/// small grids.
pub fn interval_pair_accounting(ce: &Counterexample) -> Result<(f64, f64)> {
    let conv = Normalization::Unnormalized;
    let row_grid = ce.g.grid();
    let pieces = ce
        .intervals
        .iter()
        .map(|&(_, lo, hi)| {
            let part = CircleFunction::from_fn(row_grid, |x| {
                if x >= lo && x <= hi {
                    Complex64::new(1.0, 0.0)
                } else {
                    ZERO
                }
            });
            let masked: Vec<Complex64> = part
                .samples()
                .iter()
                .zip(ce.g.samples())
                .map(|(a, b)| a * b)
                .collect();
            let masked = CircleFunction::new(row_grid, masked)?;
            adjoint_apply(&masked, &ce.poles, &ce.choice, ce.kernel, conv)
        })
        .collect::<Result<Vec<_>>>()?;
    let w = conv.weight(row_grid.len());
    let mut diagonal = 0.0;
    let mut off = 0.0;
    for (i, a) in pieces.iter().enumerate() {
        for (j, b) in pieces.iter().enumerate() {
            let ip: Complex64 = a
                .samples()
                .iter()
                .zip(b.samples())
                .map(|(u, v)| u * v.conj())
                .sum::<Complex64>()
                * w;
            if i == j {
                diagonal += ip.re;
            } else {
                off += ip.re;
            }
        }
    }
    Ok((diagonal, off))
}

/// `(θ_{k'} - θ_k)(y)` in the zero-based enumeration of the construction.
pub fn phase_gap(poles: &PoleSequence, k: usize, k2: usize, y: f64) -> f64 {
    poles.as_slice()[k + 1..=k2].iter().map(|&a| phase(a, y)).sum()
}

/// Largest `|Δθ(y) + Δθ((k+k'+1)M(1-r) - y)|` over `ys`, with `Δθ = θ_{k'} - θ_k`.
pub fn odd_symmetry_defect(ce: &Counterexample, k: usize, k2: usize, ys: &[f64]) -> f64 {
    let center = (k + k2 + 1) as f64 * ce.block_width();
    ys.iter()
        .map(|&y| (phase_gap(&ce.poles, k, k2, y) + phase_gap(&ce.poles, k, k2, center - y)).abs())
        .fold(0.0, f64::max)
}

/// Staggered quadrature of `(1/π) ∫ e^{iΔθ(y)} / tan((x'-y)/2) dy` with the
/// exact value. `e^{iΔθ}` is the boundary value of a Blaschke product `F`
/// times a unimodular constant, so the integral equals `-2i (F(x') - F(0))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HilbertIntegration {
    pub quadrature: Complex64,
    pub exact: Complex64,
    /// `-i e^{iΔθ(x')}`, the value without the mean correction.
    pub uncorrected: Complex64,
}

pub fn hilbert_integration(
    poles: &PoleSequence,
    k: usize,
    k2: usize,
    x: f64,
    grid: CircleGrid,
) -> Result<HilbertIntegration> {
    if !(k < k2 && k2 < poles.len()) {
        return Err(MtError::Argument(format!(
            "need k < k' < {}, got ({k}, {k2})",
            poles.len()
        )));
    }
    let h = grid.spacing();
    // Put the nodes half a step away from x'.
    let quadrature: Complex64 = (0..grid.len())
        .map(|l| {
            let y = x + (l as f64 + 0.5) * h;
            Complex64::from_polar(1.0, phase_gap(poles, k, k2, y)) / (0.5 * (x - y)).tan()
        })
        .sum::<Complex64>()
        * (h / PI);
    let value_at_zero: f64 = poles.as_slice()[k + 1..=k2].iter().map(|a| -a.modulus()).product();
    let f_x = Complex64::from_polar(1.0, phase_gap(poles, k, k2, x));
    let minus_i = Complex64::new(0.0, -1.0);
    Ok(HilbertIntegration {
        quadrature,
        exact: minus_i * 2.0 * (f_x - value_at_zero),
        uncorrected: minus_i * f_x,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        })
    }
}

impl FromStr for Verdict {
    type Err = MtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "PASS" => Ok(Verdict::Pass),
            "FAIL" => Ok(Verdict::Fail),
            other => Err(MtError::Format(format!("unknown verdict {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub r: f64,
    pub one_minus_r: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub ratio_sq: f64,
    pub n_grid: usize,
    pub runtime_ms: u64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn all_pass(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.verdict.passed())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .has_headers(false)
            .from_writer(writer);
        w.write_record(["r", "one_minus_r", "M", "ratio_sq", "n_grid", "runtime_ms", "verdict"])?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let rows = r.deserialize().collect::<std::result::Result<Vec<ReportRow>, _>>()?;
        Ok(Self { rows })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Least-squares slope of `ratio_sq` against `M` through the origin.
    pub fn slope_through_origin(&self) -> Option<f64> {
        let sxx: f64 = self.rows.iter().map(|r| r.m * r.m).sum();
        let sxy: f64 = self.rows.iter().map(|r| r.m * r.ratio_sq).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    }
}

/// Runs the construction for every `r` and grades `ratio²/M` against the
/// frozen band and `ratio²` for strict growth in `M`.
pub fn lower_bound_sweep(r_list: &[f64]) -> Result<ExperimentReport> {
    lower_bound_sweep_with(r_list, KernelKind::Cosecant, fixtures::LOWER_BOUND_BAND)
}

pub fn lower_bound_sweep_with(r_list: &[f64], kernel: KernelKind, band: (f64, f64)) -> Result<ExperimentReport> {
    lower_bound_sweep_on(r_list, kernel, band, None)
}

/// As [`lower_bound_sweep_with`] on a fixed grid; `None` picks the smallest
/// resolving grid per row.
pub fn lower_bound_sweep_on(
    r_list: &[f64],
    kernel: KernelKind,
    band: (f64, f64),
    grid: Option<CircleGrid>,
) -> Result<ExperimentReport> {
    if r_list.is_empty() {
        return Err(MtError::Argument("empty r list".into()));
    }
    let mut rows = Vec::with_capacity(r_list.len());
    for &r in r_list {
        let start = Instant::now();
        let ce = match grid {
            Some(g) => counterexample_on(r, g)?,
            None => counterexample(r)?,
        };
        let measured = measure_counterexample_with(&ce, kernel)?;
        rows.push(ReportRow {
            r,
            one_minus_r: 1.0 - r,
            m: ce.m,
            ratio_sq: measured.ratio_sq(),
            n_grid: ce.g.len(),
            runtime_ms: start.elapsed().as_millis() as u64,
            verdict: Verdict::Pass,
        });
    }
    grade_lower_bound(&mut rows, band);
    Ok(ExperimentReport { rows })
}

fn grade_lower_bound(rows: &mut [ReportRow], band: (f64, f64)) {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[a].m.total_cmp(&rows[b].m));
    let mut previous: Option<f64> = None;
    for i in order {
        let row = &mut rows[i];
        let per_m = row.ratio_sq / row.m;
        let in_band = per_m >= band.0 && per_m <= band.1;
        let growing = previous.is_none_or(|p| row.ratio_sq > p);
        row.verdict = Verdict::from_bool(in_band && growing);
        previous = Some(row.ratio_sq);
    }
}

/// The closed triangle with vertices `(1,0)`, `(1/2,1/2)`, `(1/2,-1/2)`.
pub fn in_nontangential_triangle(z: Complex64) -> bool {
    let eps = 1e-12;
    z.re >= 0.5 - eps && z.re <= 1.0 + eps && z.im.abs() <= 1.0 - z.re + eps
}

/// `count` poles uniform in the nontangential triangle (the vertex `1`
/// itself is excluded since poles must lie in the open disc).
pub fn sample_triangle_poles(count: usize, seed: u64) -> PoleSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vertex = Complex64::new(1.0, 0.0);
    let e1 = Complex64::new(-0.5, 0.5);
    let e2 = Complex64::new(-0.5, -0.5);
    let mut poles = Vec::with_capacity(count);
    while poles.len() < count {
        let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        if let Ok(p) = DiscPoint::new(vertex + e1 * u + e2 * v) {
            poles.push(p);
        }
    }
    PoleSequence::new(poles)
}

/// Number of random choice functions per configuration.
pub const SAMPLED_CHOICES: usize = 16;
/// Column grid of the nontangential sweep.
pub const NONTANGENTIAL_GRID: usize = 1024;

/// The seeded random choice functions behind the sampled-choice norm.
pub fn sampled_choices(seed: u64, max_value: usize) -> Vec<ChoiceFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..SAMPLED_CHOICES)
        .map(|_| {
            let pieces = 1usize << rng.random_range(0..7);
            ChoiceFunction::random(&mut rng, pieces, max_value)
        })
        .collect()
}

/// Largest operator norm over `choices`.
pub fn max_norm_over(
    poles: &PoleSequence,
    choices: &[ChoiceFunction],
    grid: CircleGrid,
    kernel: KernelKind,
) -> Result<f64> {
    let mut best = 0.0_f64;
    for c in choices {
        best = best.max(l2_operator_norm(&build_linearized(poles, c, grid, kernel)?)?);
    }
    Ok(best)
}

/// Largest norm over the seeded random choice functions and `extra`
/// ("sampled-choice norm").
pub fn sampled_choice_norm(
    poles: &PoleSequence,
    grid: CircleGrid,
    kernel: KernelKind,
    seed: u64,
    extra: &[ChoiceFunction],
) -> Result<f64> {
    let mut choices = sampled_choices(seed, poles.len());
    choices.extend_from_slice(extra);
    max_norm_over(poles, &choices, grid, kernel)
}

/// `count` poles `r e^{iMk(1-r)}` on one circle with `e^M = count - 1/2`,
/// so that the rotated construction has exactly `count` poles, and its block
/// choice function.
pub fn compact_circular_configuration(count: usize) -> Result<(PoleSequence, ChoiceFunction)> {
    if count < 3 {
        return Err(MtError::Argument("the circular configuration needs at least 3 poles".into()));
    }
    let e_m = count as f64 - 0.5;
    let m = e_m.ln();
    let gap = 1.0 / (m * e_m);
    let r = 1.0 - gap;
    let width = m * gap;
    let poles = (0..count)
        .map(|k| DiscPoint::from_polar(r, width * k as f64))
        .collect::<Result<Vec<_>>>()?;
    let mut breakpoints: Vec<f64> = (1..=count).map(|k| k as f64 * width).collect();
    let mut values: Vec<usize> = (1..count).map(|k| k + 1).collect();
    values.push(2);
    while breakpoints.last().is_some_and(|&b| b >= PI) {
        breakpoints.pop();
        values.pop();
    }
    Ok((PoleSequence::new(poles), ChoiceFunction::new(breakpoints, values)?))
}

/// Both halves of the nontangential contrast.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastSweep {
    /// Triangle poles; `r` is the largest modulus and `M` the pole count.
    pub nontangential: ExperimentReport,
    /// Circular configurations for the counts `≥ 3`; `r`, `M` as in the construction.
    pub compact: ExperimentReport,
    /// max/min of the nontangential sampled-choice norm.
    pub spread: f64,
    /// last/first compact norm (in count order).
    pub compact_growth: f64,
}

fn spread_of(rows: &[ReportRow]) -> f64 {
    let norms = rows.iter().map(|r| r.ratio_sq.sqrt());
    let max = norms.clone().fold(0.0, f64::max);
    let min = norms.fold(f64::INFINITY, f64::min);
    max / min
}

pub fn contrast_sweep(counts: &[usize], seed: u64, grid: CircleGrid) -> Result<ContrastSweep> {
    if counts.is_empty() {
        return Err(MtError::Argument("empty count list".into()));
    }
    let all = sample_triangle_poles(counts.iter().copied().max().unwrap_or(0), seed);
    let mut rows = Vec::with_capacity(counts.len());
    let mut compact_rows = Vec::new();
    for &count in counts {
        let start = Instant::now();
        let poles = all.prefix(count)?;
        let norm = sampled_choice_norm(&poles, grid, KernelKind::Cauchy, seed, &[])?;
        let r = poles.radius_bound();
        rows.push(ReportRow {
            r,
            one_minus_r: 1.0 - r,
            m: count as f64,
            ratio_sq: norm * norm,
            n_grid: grid.len(),
            runtime_ms: start.elapsed().as_millis() as u64,
            verdict: Verdict::Pass,
        });
        if count >= 3 {
            let start = Instant::now();
            let (circle, block) = compact_circular_configuration(count)?;
            let norm = sampled_choice_norm(&circle, grid, KernelKind::Cauchy, seed, &[block])?;
            let r = circle.radius_bound();
            compact_rows.push(ReportRow {
                r,
                one_minus_r: 1.0 - r,
                m: (count as f64 - 0.5).ln(),
                ratio_sq: norm * norm,
                n_grid: grid.len(),
                runtime_ms: start.elapsed().as_millis() as u64,
                verdict: Verdict::Pass,
            });
        }
    }
    let spread = spread_of(&rows);
    let compact_growth = match (compact_rows.first(), compact_rows.last()) {
        (Some(a), Some(b)) if compact_rows.len() > 1 => (b.ratio_sq / a.ratio_sq).sqrt(),
        _ => f64::NAN,
    };
    let bounded = spread < fixtures::NONTANGENTIAL_SPREAD;
    // Without a compact baseline only boundedness is graded.
    let grows = compact_growth.is_nan() || compact_growth > 1.0;
    for row in &mut rows {
        row.verdict = Verdict::from_bool(bounded && grows);
    }
    for row in &mut compact_rows {
        row.verdict = Verdict::from_bool(compact_growth > 1.0);
    }
    Ok(ContrastSweep {
        nontangential: ExperimentReport { rows },
        compact: ExperimentReport { rows: compact_rows },
        spread,
        compact_growth,
    })
}

/// Triangle-pole sweep graded by the spread of the sampled-choice norm (the
/// smaller configurations are prefixes of the larger) and by growth of the
/// circular configurations with the same counts.
pub fn nontangential_sweep(counts: &[usize], seed: u64) -> Result<ExperimentReport> {
    nontangential_sweep_on(counts, seed, CircleGrid::new(NONTANGENTIAL_GRID)?)
}

pub fn nontangential_sweep_on(counts: &[usize], seed: u64, grid: CircleGrid) -> Result<ExperimentReport> {
    Ok(contrast_sweep(counts, seed, grid)?.nontangential)
}
