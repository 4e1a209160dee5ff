//! Cholesky-based helpers over nalgebra for symmetric positive definite
//! systems.

use alloc::format;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub(crate) fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// Factorization of an SPD matrix; `what` names the matrix in errors.
pub(crate) struct Spd {
    chol: Cholesky<f64, Dyn>,
}

impl Spd {
    pub(crate) fn new(m: DMatrix<f64>, what: &str) -> Result<Self> {
        let n = m.nrows();
        Cholesky::new(m)
            .filter(|c| {
                // squared pivots are the Schur complements; reject near-zero ones
                let l = c.l_dirty();
                let piv = (0..n).map(|i| l[(i, i)] * l[(i, i)]);
                let max = piv.clone().fold(0.0, f64::max);
                piv.clone().all(|p| p.is_finite() && p > 1e-14 * max)
            })
            .map(|chol| Self { chol })
            .ok_or_else(|| Error::SingularCov(format!("{what} is not positive definite")))
    }

    pub(crate) fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    pub(crate) fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub(crate) fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub(crate) fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}
