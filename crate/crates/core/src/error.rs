//! Error type shared by every module of the crate.

use num_complex::Complex64;
use thiserror::Error;

/// Failures reported by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MtError {
    /// A pole was requested outside the open unit disc.
    #[error("point {value} has modulus {modulus} >= 1; poles must lie strictly inside the unit disc")]
    OutsideDisc { value: Complex64, modulus: f64 },

    /// The Möbius denominator vanished (only reachable for |z| > 1).
    #[error("Möbius transform is singular at z = {z} (denominator modulus {modulus:e})")]
    Singular { z: Complex64, modulus: f64 },

    /// A prefix length or basis index exceeded the number of available poles.
    #[error("index {requested} out of range: only {available} poles available")]
    Index { requested: usize, available: usize },

    /// Two circle functions live on different grids.
    #[error("grid mismatch: {0}")]
    Shape(String),

    /// Invalid argument value.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A root of F - F(0) sits inside the boundary ring around |z| = 1.
    #[error("root {root} lies within {tolerance:e} of the unit circle (step {step})")]
    BoundaryRoot {
        root: Complex64,
        tolerance: f64,
        step: usize,
    },

    /// An iterative method hit its iteration cap.
    #[error("no convergence after {iterations} iterations (last relative residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    /// The grid cannot resolve the structural intervals of a construction.
    #[error("grid of {grid} points is too coarse: at least {required} points needed")]
    Resolution { grid: usize, required: usize },

    /// A hypothesis of a numerical check is violated.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Malformed serialized input or output failure.
    #[error("format error: {0}")]
    Format(String),
}

impl From<csv::Error> for MtError {
    fn from(e: csv::Error) -> Self {
        MtError::Format(e.to_string())
    }
}

impl From<serde_json::Error> for MtError {
    fn from(e: serde_json::Error) -> Self {
        MtError::Format(e.to_string())
    }
}

impl From<std::io::Error> for MtError {
    fn from(e: std::io::Error) -> Self {
        MtError::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, MtError>;
