//! Numerical laboratory for Malmquist–Takenaka series.
//!
//! * [`blaschke`]: Möbius maps, Blaschke products, the MT basis and the boundary phases Ψ_b.
//! * [`series`]: circle functions, MT coefficients, partial sums and maximal partial sums.
//! * [`unwinding`]: polynomial Blaschke factorization and the unwinding series.
//! * [`experiments`]: linearized maximal operators, operator norms and norm sweeps.
//! * [`verify`]: numeric checks of the phase, oscillation and invariance estimates.

pub mod blaschke;
pub mod error;
pub mod experiments;
pub mod fixtures;
pub mod linalg;
pub mod poly;
pub mod series;
pub mod unwinding;
pub mod verify;

pub use error::{MtError, Result};
