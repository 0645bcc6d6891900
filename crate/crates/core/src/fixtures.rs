//! Frozen calibration constants. Regenerate with `mtlab calibrate`; every
//! bound carries 50% headroom over the reference measurement.

/// Band `[c1, c2]` for `ratio²/M` in the lower-bound sweep.
pub const LOWER_BOUND_BAND: (f64, f64) = (10.6646, 33.4484);

/// Allowed max/min spread of the sampled-choice norm across pole counts.
pub const NONTANGENTIAL_SPREAD: f64 = 2.0;

/// `(A, B, C)`: on each lacunary arc `A·s ≤ inf Ψ'`, `sup Ψ' ≤ B·s` and
/// `sup/inf ≤ C`, with `s = 2^{-2j}/(1-|b|)`.
pub const DERIVATIVE_BAND: (f64, f64, f64) = (0.0209, 3.1124, 96.4782);

/// `sup/inf` of Ψ_b' over intervals of length `1 - |b|`.
pub const DERIVATIVE_EQUIVALENCE: f64 = 3.8996;

pub const VAN_DER_CORPUT_C: f64 = 2.6222;

/// Constant `c` in `Ψ_r(j(1-r)) ≈ π - c/j` and the bound on the weighted error.
pub const PHASE_ASYMPTOTIC_CONSTANT: f64 = 2.0;
pub const PHASE_ASYMPTOTIC_BOUND: f64 = 0.6424;

pub const METRIC_DOUBLING_C0: f64 = 2.3872;

const AP_BOUNDS: [(f64, f64); 3] = [(1.5, 2.3440), (2.0, 1.5), (4.0, 20.0833)];

/// Frozen `[w]_{A_p}` bound; `None` for exponents outside the calibrated set.
pub fn ap_bound(p: f64) -> Option<f64> {
    AP_BOUNDS.iter().find(|&&(q, _)| q == p).map(|&(_, b)| b)
}
