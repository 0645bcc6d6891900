//! Largest singular value by seeded block power iteration on `A*A`, with a
//! dense SVD reference for small matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{MtError, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Relative residual tolerance and iteration cap of [`largest_singular_value`].
pub const POWER_TOL: f64 = 1e-6;
pub const POWER_MAX_ITER: usize = 500;
/// Size of the iterated block; the extra vectors absorb clustered singular values.
pub const POWER_BLOCK: usize = 8;
/// Largest dimension for which the dense SVD cross-check is run.
pub const DENSE_ORACLE_MAX: usize = 512;

/// Anything that can apply `A` and `A*` to vectors.
pub trait LinearOperator: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn apply(&self, x: &[Complex64]) -> Vec<Complex64>;
    fn apply_adjoint(&self, y: &[Complex64]) -> Vec<Complex64>;

    /// `A*A X` for a block of column vectors.
    fn apply_gram(&self, x: &CMatrix) -> CMatrix {
        let columns: Vec<Vec<Complex64>> = (0..x.ncols())
            .into_par_iter()
            .map(|j| {
                let col: Vec<Complex64> = x.column(j).iter().copied().collect();
                self.apply_adjoint(&self.apply(&col))
            })
            .collect();
        CMatrix::from_fn(x.nrows(), x.ncols(), |i, j| columns[j][i])
    }
}

impl LinearOperator for CMatrix {
    fn rows(&self) -> usize {
        self.nrows()
    }

    fn cols(&self) -> usize {
        self.ncols()
    }

    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.nrows())
            .into_par_iter()
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn apply_adjoint(&self, y: &[Complex64]) -> Vec<Complex64> {
        (0..self.ncols())
            .into_par_iter()
            .map(|j| self.column(j).iter().zip(y).map(|(a, b)| a.conj() * b).sum())
            .collect()
    }

    fn apply_gram(&self, x: &CMatrix) -> CMatrix {
        self.ad_mul(&(self * x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    /// `‖A*A v − σ² v‖ / σ²` for the returned Ritz vector.
    pub residual: f64,
}

/// Largest singular value of `op`, seeded start block.
pub fn largest_singular_value(op: &dyn LinearOperator, seed: u64) -> Result<NormEstimate> {
    largest_singular_value_with(op, seed, POWER_TOL, POWER_MAX_ITER)
}

pub fn largest_singular_value_with(
    op: &dyn LinearOperator,
    seed: u64,
    tol: f64,
    max_iter: usize,
) -> Result<NormEstimate> {
    let n = op.cols();
    if n == 0 || op.rows() == 0 {
        return Err(MtError::Argument("operator norm of an empty matrix".into()));
    }
    let block = POWER_BLOCK.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = CMatrix::from_fn(n, block, |_, _| {
        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    });
    x = orthonormalize(x);
    let mut residual = f64::INFINITY;
    for iteration in 1..=max_iter {
        let z = op.apply_gram(&x);
        let h = x.adjoint() * &z;
        let h = (&h + h.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(h);
        let (top, lambda) = eig
            .eigenvalues
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty block");
        if lambda <= 0.0 {
            // A annihilates the whole block; the start block is generic, so A = 0.
            return Ok(NormEstimate {
                value: 0.0,
                iterations: iteration,
                residual: 0.0,
            });
        }
        let u: DVector<Complex64> = eig.eigenvectors.column(top).into_owned();
        let v = &x * &u;
        let av = &z * &u;
        residual = (&av - &v * Complex64::new(lambda, 0.0)).norm() / lambda;
        if residual < tol {
            return Ok(NormEstimate {
                value: lambda.sqrt(),
                iterations: iteration,
                residual,
            });
        }
        x = orthonormalize(z);
    }
    Err(MtError::NonConvergence {
        iterations: max_iter,
        residual,
    })
}

fn orthonormalize(m: CMatrix) -> CMatrix {
    m.qr().q()
}

/// Largest singular value from a full SVD.
pub fn dense_largest_singular_value(a: &CMatrix) -> Result<f64> {
    if a.is_empty() {
        return Err(MtError::Argument("operator norm of an empty matrix".into()));
    }
    Ok(a.singular_values().iter().copied().fold(0.0, f64::max))
}

/// Power iteration value and, when both dimensions are at most
/// [`DENSE_ORACLE_MAX`], the dense SVD value.
pub fn cross_checked_norm(a: &CMatrix, seed: u64) -> Result<(NormEstimate, Option<f64>)> {
    let estimate = largest_singular_value(a, seed)?;
    let dense = if a.nrows() <= DENSE_ORACLE_MAX && a.ncols() <= DENSE_ORACLE_MAX {
        Some(dense_largest_singular_value(a)?)
    } else {
        None
    };
    Ok((estimate, dense))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix() {
        let a = CMatrix::from_diagonal(&DVector::from_vec(vec![
            Complex64::new(3.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.5, 0.0),
        ]));
        let est = largest_singular_value(&a, 0).unwrap();
        assert!((est.value - 3.0).abs() < 1e-6);
        assert!((dense_largest_singular_value(&a).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn identity_and_zero() {
        let a = CMatrix::identity(20, 20);
        assert!((largest_singular_value(&a, 1).unwrap().value - 1.0).abs() < 1e-9);
        let z = CMatrix::zeros(5, 7);
        assert_eq!(largest_singular_value(&z, 1).unwrap().value, 0.0);
        assert!(largest_singular_value(&CMatrix::zeros(0, 3), 1).is_err());
    }

    #[test]
    fn random_matrix_matches_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = CMatrix::from_fn(200, 200, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let (est, dense) = cross_checked_norm(&a, 3).unwrap();
        let dense = dense.unwrap();
        assert!(((est.value - dense) / dense).abs() < 1e-5, "{} vs {}", est.value, dense);
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = CMatrix::from_fn(100, 100, |_, _| Complex64::new(rng.random::<f64>(), 0.0));
        // rank-one dominant part converges at once; use a flat spectrum instead
        let flat = CMatrix::from_diagonal(&DVector::from_fn(100, |i, _| {
            Complex64::new(1.0 - 1e-4 * i as f64, 0.0)
        }));
        assert!(largest_singular_value(&a, 0).is_ok());
        match largest_singular_value_with(&flat, 0, 1e-14, 2) {
            Err(MtError::NonConvergence { iterations, residual }) => {
                assert_eq!(iterations, 2);
                assert!(residual.is_finite());
            }
            other => panic!("{other:?}"),
        }
    }
}
