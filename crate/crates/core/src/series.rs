//! Circle functions on uniform grids, trapezoid inner products, MT
//! coefficients and partial sums, and modulated Hilbert-type integrals.
//!
//! All integrals here carry the normalized measure `dx / 2π`.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blaschke::{accumulated_phase_samples, mobius_unchecked, phase_derivative, PoleSequence};
use crate::error::{MtError, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Smallest and largest admissible grid sizes.
pub const MIN_GRID: usize = 64;
pub const MAX_GRID: usize = 1 << 18;

/// Uniform grid `x_m = -π + 2πm/n` (or the half-step staggered copy).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CircleGrid {
    n: usize,
    offset: bool,
}

impl CircleGrid {
    pub fn new(n: usize) -> Result<Self> {
        Self::with_offset(n, false)
    }

    /// Grid shifted by half a step, `x_m + π/n`.
    pub fn staggered(n: usize) -> Result<Self> {
        Self::with_offset(n, true)
    }

    pub fn with_offset(n: usize, offset: bool) -> Result<Self> {
        if !n.is_power_of_two() || !(MIN_GRID..=MAX_GRID).contains(&n) {
            return Err(MtError::Argument(format!(
                "grid size must be a power of two in [{MIN_GRID}, {MAX_GRID}], got {n}"
            )));
        }
        Ok(Self { n, offset })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn is_offset(&self) -> bool {
        self.offset
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    #[inline]
    pub fn node(&self, m: usize) -> f64 {
        let shift = if self.offset { 0.5 } else { 0.0 };
        -PI + self.spacing() * (m as f64 + shift)
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|m| self.node(m)).collect()
    }

    /// `e^{i x_m}` for every node.
    pub fn circle_points(&self) -> Vec<Complex64> {
        (0..self.n)
            .map(|m| Complex64::from_polar(1.0, self.node(m)))
            .collect()
    }

    /// The grid with the other offset.
    pub fn flipped(&self) -> Self {
        Self {
            n: self.n,
            offset: !self.offset,
        }
    }

    /// Same offset, twice the resolution.
    pub fn refined(&self) -> Result<Self> {
        Self::with_offset(self.n * 2, self.offset)
    }
}

/// Complex samples of a function on a [`CircleGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct CircleFunction {
    grid: CircleGrid,
    samples: Vec<Complex64>,
}

impl CircleFunction {
    pub fn new(grid: CircleGrid, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(MtError::Shape(format!(
                "{} samples for a grid of {} nodes",
                samples.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, samples })
    }

    pub fn zeros(grid: CircleGrid) -> Self {
        Self {
            grid,
            samples: vec![ZERO; grid.len()],
        }
    }

    /// Samples `f(x_m)` of a function of the angle.
    pub fn from_fn(grid: CircleGrid, f: impl Fn(f64) -> Complex64) -> Self {
        let samples = (0..grid.len()).map(|m| f(grid.node(m))).collect();
        Self { grid, samples }
    }

    /// Samples `F(e^{i x_m})` of a function of the boundary point.
    pub fn from_boundary(grid: CircleGrid, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self::from_fn(grid, |x| f(Complex64::from_polar(1.0, x)))
    }

    pub fn grid(&self) -> CircleGrid {
        self.grid
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            grid: self.grid,
            samples: self.samples.iter().map(|&s| s * c).collect(),
        }
    }

    pub fn sub(&self, other: &CircleFunction) -> Result<Self> {
        same_grid(self, other)?;
        Ok(Self {
            grid: self.grid,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn add(&self, other: &CircleFunction) -> Result<Self> {
        same_grid(self, other)?;
        Ok(Self {
            grid: self.grid,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// `max_m |f(x_m)|`.
    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().map(|s| s.norm()).fold(0.0, f64::max)
    }

    /// CSV with header `index,x,re,im` and LF line endings.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .has_headers(false)
            .from_writer(writer);
        w.write_record(["index", "x", "re", "im"])?;
        for (m, s) in self.samples.iter().enumerate() {
            w.serialize(CsvRow {
                index: m,
                x: self.grid.node(m),
                re: s.re,
                im: s.im,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Inverse of [`CircleFunction::write_csv`]; the grid size and offset are
    /// recovered from the rows.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["index", "x", "re", "im"] {
            return Err(MtError::Format(format!(
                "expected header index,x,re,im, found {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        for row in r.deserialize::<CsvRow>() {
            rows.push(row?);
        }
        if rows.is_empty() {
            return Err(MtError::Format("no samples".into()));
        }
        let n = rows.len();
        let spacing = 2.0 * PI / n as f64;
        let offset = (rows[0].x + PI) > 0.25 * spacing;
        let grid = CircleGrid::with_offset(n, offset)?;
        for (m, row) in rows.iter().enumerate() {
            if row.index != m || (row.x - grid.node(m)).abs() > 1e-9 * (1.0 + row.x.abs()) {
                return Err(MtError::Format(format!(
                    "row {m} does not match the uniform grid (index {}, x {})",
                    row.index, row.x
                )));
            }
        }
        let samples = rows.iter().map(|r| Complex64::new(r.re, r.im)).collect();
        Self::new(grid, samples)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    index: usize,
    x: f64,
    re: f64,
    im: f64,
}

fn same_grid(f: &CircleFunction, g: &CircleFunction) -> Result<()> {
    if f.grid != g.grid {
        return Err(MtError::Shape(format!("{:?} vs {:?}", f.grid, g.grid)));
    }
    Ok(())
}

/// Trapezoid approximation `(1/n) Σ f(x_m) conj(g(x_m))` of `(1/2π)∫ f ḡ`.
pub fn inner_product(f: &CircleFunction, g: &CircleFunction) -> Result<Complex64> {
    same_grid(f, g)?;
    Ok(dot_conj(&f.samples, &g.samples) / f.len() as f64)
}

#[inline]
fn dot_conj(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

/// The first `count` MT basis functions sampled on `grid`.
pub fn mt_basis_on_grid(poles: &PoleSequence, count: usize, grid: CircleGrid) -> Result<Vec<CircleFunction>> {
    poles.check_prefix(count)?;
    let z = grid.circle_points();
    let mut blaschke = vec![ONE; z.len()];
    let mut out = Vec::with_capacity(count);
    for a in poles.as_slice()[..count].iter().map(|p| p.value()) {
        let weight = (1.0 - a.norm_sqr()).sqrt();
        let samples = blaschke
            .iter()
            .zip(&z)
            .map(|(&bl, &zm)| bl * weight / (1.0 - a.conj() * zm))
            .collect();
        out.push(CircleFunction { grid, samples });
        for (bl, &zm) in blaschke.iter_mut().zip(&z) {
            *bl *= mobius_unchecked(a, zm);
        }
    }
    Ok(out)
}

/// `(⟨f, φ_n⟩)_{n < count}`.
pub fn mt_coefficients(f: &CircleFunction, poles: &PoleSequence, count: usize) -> Result<Vec<Complex64>> {
    let basis = mt_basis_on_grid(poles, count, f.grid)?;
    basis.iter().map(|phi| inner_product(f, phi)).collect()
}

/// `Σ_{n < count} ⟨f, φ_n⟩ φ_n` by explicit expansion.
pub fn partial_sum_direct(f: &CircleFunction, poles: &PoleSequence, count: usize) -> Result<CircleFunction> {
    let basis = mt_basis_on_grid(poles, count, f.grid)?;
    let mut out = CircleFunction::zeros(f.grid);
    for phi in &basis {
        let c = inner_product(f, phi)?;
        for (o, p) in out.samples.iter_mut().zip(&phi.samples) {
            *o += c * p;
        }
    }
    Ok(out)
}

/// Partial sum through the closed-form kernel
/// `(e^{i(θ_N(x) - θ_N(y))} - 1) / (e^{i(x-y)} - 1)`; the diagonal uses the
/// removable-singularity value `θ_N'(x)`.
pub fn partial_sum_kernel(f: &CircleFunction, poles: &PoleSequence, count: usize) -> Result<CircleFunction> {
    poles.check_prefix(count)?;
    let grid = f.grid;
    let nodes = grid.nodes();
    let z = grid.circle_points();
    let theta = accumulated_phase_samples(poles, count, &nodes);
    let e: Vec<Complex64> = theta.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
    let diag: Vec<f64> = nodes
        .iter()
        .map(|&x| {
            poles.as_slice()[..count]
                .iter()
                .map(|&a| phase_derivative(a, x))
                .sum()
        })
        .collect();
    let n = grid.len();
    let fs = &f.samples;
    let samples: Vec<Complex64> = (0..n)
        .into_par_iter()
        .map(|m| {
            let mut acc = ZERO;
            for l in 0..n {
                let k = if l == m {
                    Complex64::new(diag[m], 0.0)
                } else {
                    (e[m] * e[l].conj() - 1.0) / (z[m] * z[l].conj() - 1.0)
                };
                acc += fs[l] * k;
            }
            acc / n as f64
        })
        .collect();
    Ok(CircleFunction { grid, samples })
}

/// `x ↦ max_{0 ≤ N ≤ n_max} |S_N f(x)|`, returned as a real-valued circle
/// function (imaginary parts are zero).
pub fn maximal_partial_sum(f: &CircleFunction, poles: &PoleSequence, n_max: usize) -> Result<CircleFunction> {
    let basis = mt_basis_on_grid(poles, n_max, f.grid)?;
    let mut running = vec![ZERO; f.len()];
    let mut best = vec![0.0_f64; f.len()];
    for phi in &basis {
        let c = inner_product(f, phi)?;
        for ((s, b), p) in running.iter_mut().zip(best.iter_mut()).zip(&phi.samples) {
            *s += c * p;
            *b = b.max(s.norm());
        }
    }
    Ok(CircleFunction {
        grid: f.grid,
        samples: best.into_iter().map(|b| Complex64::new(b, 0.0)).collect(),
    })
}

/// Singular kernels `K(u)` evaluated at the raw difference `u = x - y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `1 / (e^{iu} - 1)`.
    Cauchy,
    /// `1 / (2 tan(u/2))`, the conjugate-function kernel.
    Cotangent,
    /// `1 / sin(u/2)`.
    Cosecant,
    /// `1 / u`.
    Linear,
}

impl KernelKind {
    pub const ALL: [KernelKind; 4] = [
        KernelKind::Cauchy,
        KernelKind::Cotangent,
        KernelKind::Cosecant,
        KernelKind::Linear,
    ];

    #[inline]
    pub fn eval(self, u: f64) -> Complex64 {
        match self {
            KernelKind::Cauchy => ONE / (Complex64::from_polar(1.0, u) - 1.0),
            KernelKind::Cotangent => Complex64::new(0.5 / (0.5 * u).tan(), 0.0),
            KernelKind::Cosecant => Complex64::new(1.0 / (0.5 * u).sin(), 0.0),
            KernelKind::Linear => Complex64::new(1.0 / u, 0.0),
        }
    }

    pub fn is_real(self) -> bool {
        !matches!(self, KernelKind::Cauchy)
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Cauchy => "cauchy",
            KernelKind::Cotangent => "cotangent",
            KernelKind::Cosecant => "cosecant",
            KernelKind::Linear => "linear",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = MtError;

    fn from_str(s: &str) -> Result<Self> {
        KernelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| MtError::Argument(format!("unknown kernel kind '{s}'")))
    }
}

/// `x ↦ (1/2π)∫ f(y) e^{-iθ_n(y)} K(x - y) dy` on the staggered grid.
pub fn modulated_hilbert(
    f: &CircleFunction,
    poles: &PoleSequence,
    count: usize,
    kernel: KernelKind,
) -> Result<CircleFunction> {
    poles.check_prefix(count)?;
    if f.grid.is_offset() {
        return Err(MtError::Shape(
            "modulated_hilbert expects input on the base grid".into(),
        ));
    }
    let ys = f.grid.nodes();
    let theta = accumulated_phase_samples(poles, count, &ys);
    let modulated: Vec<Complex64> = f
        .samples
        .iter()
        .zip(&theta)
        .map(|(s, &t)| s * Complex64::from_polar(1.0, -t))
        .collect();
    let out_grid = f.grid.flipped();
    let n = f.len();
    let samples = (0..n)
        .into_par_iter()
        .map(|m| {
            let x = out_grid.node(m);
            let acc: Complex64 = ys
                .iter()
                .zip(&modulated)
                .map(|(&y, &v)| v * kernel.eval(x - y))
                .sum();
            acc / n as f64
        })
        .collect();
    Ok(CircleFunction {
        grid: out_grid,
        samples,
    })
}

/// Discrete `L^p` norm for the normalized measure; `p = f64::INFINITY` gives
/// the sup norm.
pub fn lp_norm(f: &CircleFunction, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(MtError::Argument(format!("L^p exponent must be >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(f.sup_norm());
    }
    let mean = f.samples.iter().map(|s| s.norm().powf(p)).sum::<f64>() / f.len() as f64;
    Ok(mean.powf(1.0 / p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn exp_fn(grid: CircleGrid, k: i32) -> CircleFunction {
        CircleFunction::from_fn(grid, |x| Complex64::from_polar(1.0, k as f64 * x))
    }

    #[test]
    fn grid_properties() {
        let g = CircleGrid::new(64).unwrap();
        let s = CircleGrid::staggered(64).unwrap();
        assert_eq!(g.node(0), -PI);
        for m in 1..64 {
            assert!((g.node(m) - g.node(m - 1) - g.spacing()).abs() < 1e-14);
            assert!((s.node(m) - g.node(m) - 0.5 * g.spacing()).abs() < 1e-14);
        }
        assert!(CircleGrid::new(100).is_err());
        assert!(CircleGrid::new(32).is_err());
        assert!(CircleGrid::new(1 << 19).is_err());
    }

    #[test]
    fn inner_product_examples() {
        let g = CircleGrid::new(256).unwrap();
        let one = CircleFunction::from_fn(g, |_| ONE);
        assert!((inner_product(&one, &one).unwrap() - ONE).norm() < 1e-15);
        let e1 = exp_fn(g, 1);
        let e2 = exp_fn(g, 2);
        assert!(inner_product(&e1, &e2).unwrap().norm() < 1e-14);
        assert!((inner_product(&e1, &e1).unwrap() - ONE).norm() < 1e-14);
        let other = exp_fn(CircleGrid::new(128).unwrap(), 1);
        assert!(matches!(inner_product(&e1, &other), Err(MtError::Shape(_))));
    }

    #[test]
    fn fourier_coefficients() {
        let g = CircleGrid::new(256).unwrap();
        let poles = PoleSequence::fourier(6);
        let coeffs = mt_coefficients(&exp_fn(g, 2), &poles, 6).unwrap();
        for (n, cn) in coeffs.iter().enumerate() {
            let expected = if n == 2 { ONE } else { ZERO };
            assert!((cn - expected).norm() < 1e-13);
        }
        let zero = CircleFunction::zeros(g);
        assert!(mt_coefficients(&zero, &poles, 6).unwrap().iter().all(|c| c.norm() == 0.0));
        assert!(mt_coefficients(&zero, &poles, 7).is_err());
    }

    #[test]
    fn fourier_truncation() {
        let g = CircleGrid::new(256).unwrap();
        let poles = PoleSequence::fourier(3);
        let f = exp_fn(g, 1).add(&exp_fn(g, 5)).unwrap();
        let s = partial_sum_direct(&f, &poles, 3).unwrap();
        assert!(s.sub(&exp_fn(g, 1)).unwrap().sup_norm() < 1e-13);
        let s0 = partial_sum_direct(&f, &poles, 0).unwrap();
        assert_eq!(s0.sup_norm(), 0.0);
        let k0 = partial_sum_kernel(&f, &poles, 0).unwrap();
        assert_eq!(k0.sup_norm(), 0.0);
    }

    #[test]
    fn kernel_diagonal_is_phase_derivative() {
        // With f a unit mass at one node, the kernel sum picks the diagonal.
        let g = CircleGrid::new(64).unwrap();
        let poles = PoleSequence::from_complex(&[c(0.3, 0.2), c(-0.6, 0.1)]).unwrap();
        let mut delta = vec![ZERO; 64];
        delta[10] = c(64.0, 0.0);
        let f = CircleFunction::new(g, delta).unwrap();
        let out = partial_sum_kernel(&f, &poles, 2).unwrap();
        let expected = crate::blaschke::accumulated_phase_derivative(&poles, 2, g.node(10)).unwrap();
        assert!((out.samples()[10] - c(expected, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn maximal_partial_sum_dominates() {
        let g = CircleGrid::new(256).unwrap();
        let poles = PoleSequence::from_complex(&[c(0.3, 0.2), c(-0.6, 0.1), c(0.0, 0.5), c(0.4, -0.4)]).unwrap();
        let f = CircleFunction::from_fn(g, |x| c((3.0 * x).cos(), x.sin() * x.sin()));
        let max = maximal_partial_sum(&f, &poles, 4).unwrap();
        for n in 0..=4 {
            let s = partial_sum_direct(&f, &poles, n).unwrap();
            for (m, v) in s.samples().iter().enumerate() {
                assert!(max.samples()[m].re >= v.norm() - 1e-14);
            }
        }
        let zero = maximal_partial_sum(&CircleFunction::zeros(g), &poles, 4).unwrap();
        assert_eq!(zero.sup_norm(), 0.0);
    }

    #[test]
    fn kernel_kind_identity() {
        for k in 0..50 {
            let u = -6.0 + 0.2417 * k as f64;
            if (0.5 * u).sin().abs() < 1e-3 {
                continue;
            }
            let lhs = KernelKind::Cauchy.eval(u);
            let rhs = c(-0.5, 0.0) - c(0.0, 1.0) * KernelKind::Cotangent.eval(u);
            assert!((lhs - rhs).norm() < 1e-12 * (1.0 + lhs.norm()));
        }
        assert_eq!("cosecant".parse::<KernelKind>().unwrap(), KernelKind::Cosecant);
        assert!(matches!("sinc".parse::<KernelKind>(), Err(MtError::Argument(_))));
    }

    #[test]
    fn hilbert_of_exponential() {
        let g = CircleGrid::new(256).unwrap();
        let f = exp_fn(g, 1);
        let out = modulated_hilbert(&f, &PoleSequence::default(), 0, KernelKind::Cotangent).unwrap();
        assert!(out.grid().is_offset());
        let expected = CircleFunction::from_fn(out.grid(), |x| c(0.0, -0.5) * Complex64::from_polar(1.0, x));
        assert!(out.sub(&expected).unwrap().sup_norm() < 1e-12);
        let z = modulated_hilbert(&CircleFunction::zeros(g), &PoleSequence::default(), 0, KernelKind::Cosecant).unwrap();
        assert_eq!(z.sup_norm(), 0.0);
        assert!(modulated_hilbert(&out, &PoleSequence::default(), 0, KernelKind::Cosecant).is_err());
    }

    #[test]
    fn lp_norm_examples() {
        let g = CircleGrid::new(128).unwrap();
        let one = CircleFunction::from_fn(g, |_| ONE);
        for p in [1.0, 1.5, 2.0, 4.0, f64::INFINITY] {
            assert!((lp_norm(&one, p).unwrap() - 1.0).abs() < 1e-14);
            assert!((lp_norm(&exp_fn(g, 3), p).unwrap() - 1.0).abs() < 1e-14);
        }
        let f = CircleFunction::from_fn(g, |x| c(x.cos(), 0.3 * x));
        let scaled = f.scaled(c(-2.0, 1.0));
        for p in [1.0, 3.0, f64::INFINITY] {
            let a = lp_norm(&scaled, p).unwrap();
            let b = 5f64.sqrt() * lp_norm(&f, p).unwrap();
            assert!((a - b).abs() < 1e-12 * b);
        }
        assert!(lp_norm(&one, 0.5).is_err());
        assert!(lp_norm(&one, f64::NAN).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let g = CircleGrid::staggered(64).unwrap();
        let f = CircleFunction::from_fn(g, |x| c(x.sin(), 1.0 / (2.0 + x.cos())));
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("index,x,re,im\n"));
        assert!(!text.contains('\r'));
        let back = CircleFunction::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, f);
        assert!(CircleFunction::read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }
}
