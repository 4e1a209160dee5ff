//! Sample matrices, Gaussian kernel widths and Gram matrices.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::matrix::Matrix;

/// An N×d table of finite observations, one sample per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct SampleMatrix(Matrix);

impl SampleMatrix {
    /// Rejects empty shapes and non-finite entries.
    pub fn new(m: Matrix) -> Result<Self> {
        if m.rows() == 0 || m.cols() == 0 {
            return Err(Error::Empty);
        }
        if let Some(pos) = m.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / m.cols(),
                col: pos % m.cols(),
            });
        }
        Ok(Self(m))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(Matrix::from_vec(rows, cols, data)?)
    }

    /// A single column sample.
    pub fn column(values: &[f64]) -> Result<Self> {
        Self::from_vec(values.len(), 1, values.to_vec())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.0.cols()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols());
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self(Matrix::from_vec(idx.len(), self.cols(), data).expect("shape by construction"))
    }
}

impl TryFrom<Matrix> for SampleMatrix {
    type Error = Error;

    fn try_from(m: Matrix) -> Result<Self> {
        Self::new(m)
    }
}

impl From<SampleMatrix> for Matrix {
    fn from(s: SampleMatrix) -> Matrix {
        s.0
    }
}

/// Width σ of the Gaussian kernel `exp(-‖a-b‖² / 2σ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    sigma: f64,
}

impl KernelSpec {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidKernel(sigma));
        }
        Ok(Self { sigma })
    }

    #[inline]
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Multiplier applied to a squared distance to get the log kernel value.
    #[inline]
    pub fn neg_half_inv_var(&self) -> f64 {
        -0.5 / (self.sigma * self.sigma)
    }

    #[inline]
    pub fn eval_sqdist(&self, d2: f64) -> f64 {
        (d2 * self.neg_half_inv_var()).exp()
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self { sigma: 1.0 }
    }
}

/// Kernel evaluations between the rows of two sample sets.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: Matrix,
    spec: KernelSpec,
}

impl GramMatrix {
    #[inline]
    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    #[inline]
    pub fn spec(&self) -> KernelSpec {
        self.spec
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.entries.rows()
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.entries.cols()
    }

    pub fn into_entries(self) -> Matrix {
        self.entries
    }
}

fn check_cols(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.cols() != b.cols() {
        return Err(dim_err(alloc::format!(
            "sample dimensions differ: {} vs {}",
            a.cols(),
            b.cols()
        )));
    }
    Ok(())
}

/// Squared Euclidean distances by explicit subtraction, never via the
/// `‖a‖² + ‖b‖² - 2ab` expansion, so near-duplicate rows give exact zeros.
pub(crate) fn sqdist_raw(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    check_cols(a, b)?;
    Ok(Matrix::from_fn(a.rows(), b.rows(), |i, j| {
        a.row(i)
            .iter()
            .zip(b.row(j))
            .map(|(x, y)| {
                let d = x - y;
                d * d
            })
            .sum()
    }))
}

/// Entry (i, j) is `‖aᵢ - bⱼ‖²`.
pub fn pairwise_sqdist(a: &SampleMatrix, b: &SampleMatrix) -> Result<Matrix> {
    sqdist_raw(a.matrix(), b.matrix())
}

/// Entry (i, j) is `exp(-‖aᵢ - bⱼ‖² / 2σ²)`.
pub fn gram(a: &SampleMatrix, b: &SampleMatrix, spec: KernelSpec) -> Result<GramMatrix> {
    let c = spec.neg_half_inv_var();
    let entries = pairwise_sqdist(a, b)?.map(|d| (d * c).exp());
    Ok(GramMatrix { entries, spec })
}

/// `ln Σ exp(vᵢ)` without overflow or premature underflow.
pub fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}
