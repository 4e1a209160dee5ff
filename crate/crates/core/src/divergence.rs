//! Cauchy-Schwarz divergence estimators, MMD, and closed-form Gaussian and
//! discrete divergences.
//!
//! Sample and Gaussian CS values use the unhalved convention
//! `D = -log((∫pq)² / (∫p² ∫q²))` unless [`Convention::Halved`] is requested.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::kernel::{gram, log_sum_exp, pairwise_sqdist, KernelSpec, SampleMatrix};
use crate::linalg::{to_na, Spd};
use crate::matrix::Matrix;

/// A divergence in nats, or a flagged infinity when supports do not overlap
/// numerically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DivergenceValue {
    Finite(f64),
    Infinite,
}

impl DivergenceValue {
    /// The value, `f64::INFINITY` for the flagged case.
    pub fn nats(self) -> f64 {
        match self {
            Self::Finite(v) => v,
            Self::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Self::Infinite)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Self::Finite(v) => Some(v),
            Self::Infinite => None,
        }
    }
}

/// Whether a CS value carries the leading factor ½.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Convention {
    /// `-log((∫pq)² / (∫p² ∫q²))`, the convention of every sample estimator.
    Eq10,
    /// Half of [`Convention::Eq10`].
    Halved,
}

/// `ln f64::MIN_POSITIVE`: a log-mean below this would be zero in linear
/// arithmetic and is reported as disjoint support.
const LOG_UNDERFLOW: f64 = -708.396_418_532_264_1;

fn check_pair(a: &SampleMatrix, b: &SampleMatrix) -> Result<()> {
    if a.cols() != b.cols() {
        return Err(dim_err(format!(
            "sample dimensions differ: {} vs {}",
            a.cols(),
            b.cols()
        )));
    }
    Ok(())
}

/// `ln((mn)⁻¹ ΣΣ κ(aᵢ, bⱼ))` evaluated with log-sum-exp.
pub(crate) fn log_gram_mean(a: &SampleMatrix, b: &SampleMatrix, spec: KernelSpec) -> Result<f64> {
    let d = pairwise_sqdist(a, b)?;
    let c = spec.neg_half_inv_var();
    let n = (a.rows() * b.rows()) as f64;
    Ok(log_sum_exp(d.as_slice().iter().map(|v| v * c)) - n.ln())
}

fn gram_mean(a: &SampleMatrix, b: &SampleMatrix, spec: KernelSpec) -> Result<f64> {
    let g = gram(a, b, spec)?;
    Ok(g.entries().sum() / (a.rows() * b.rows()) as f64)
}

/// Kernel-density estimate of the CS divergence between the distributions
/// that generated `a` and `b`.
pub fn empirical_cs(a: &SampleMatrix, b: &SampleMatrix, spec: KernelSpec) -> Result<DivergenceValue> {
    check_pair(a, b)?;
    let lpq = log_gram_mean(a, b, spec)?;
    if lpq < LOG_UNDERFLOW {
        return Ok(DivergenceValue::Infinite);
    }
    let lpp = log_gram_mean(a, a, spec)?;
    let lqq = log_gram_mean(b, b, spec)?;
    Ok(DivergenceValue::Finite(lpp + lqq - 2.0 * lpq))
}

/// Same quantity as [`empirical_cs`], written as `-2 log cos` of the angle
/// between the two kernel mean embeddings.
pub fn empirical_cs_embedding_form(
    a: &SampleMatrix,
    b: &SampleMatrix,
    spec: KernelSpec,
) -> Result<DivergenceValue> {
    check_pair(a, b)?;
    let inner = gram_mean(a, b, spec)?;
    if inner == 0.0 {
        return Ok(DivergenceValue::Infinite);
    }
    let norm_p = gram_mean(a, a, spec)?.sqrt();
    let norm_q = gram_mean(b, b, spec)?.sqrt();
    Ok(DivergenceValue::Finite(-2.0 * (inner / (norm_p * norm_q)).ln()))
}

/// Biased squared MMD, `‖μp - μq‖²` in the kernel's feature space.
pub fn empirical_mmd_sq(a: &SampleMatrix, b: &SampleMatrix, spec: KernelSpec) -> Result<f64> {
    check_pair(a, b)?;
    Ok(gram_mean(a, a, spec)? + gram_mean(b, b, spec)? - 2.0 * gram_mean(a, b, spec)?)
}

/// Mean vector and positive definite covariance of a d-variate Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    mean: Vec<f64>,
    cov: Matrix,
}

/// Smallest admissible covariance eigenvalue.
pub const COV_EIG_TOL: f64 = 1e-10;

impl GaussianParams {
    pub fn new(mean: Vec<f64>, cov: Matrix) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::Empty);
        }
        if cov.shape() != (d, d) {
            return Err(dim_err(format!(
                "mean has length {d} but covariance is {}x{}",
                cov.rows(),
                cov.cols()
            )));
        }
        if mean.iter().chain(cov.as_slice()).any(|v| !v.is_finite()) {
            return Err(Error::SingularCov("non-finite parameter".into()));
        }
        let scale = cov.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..d {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale.max(1.0) {
                    return Err(Error::SingularCov(format!("covariance not symmetric at ({i},{j})")));
                }
            }
        }
        let eig = SymmetricEigen::new(to_na(&cov));
        let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        if min <= COV_EIG_TOL {
            return Err(Error::SingularCov(format!("smallest eigenvalue {min:e}")));
        }
        Ok(Self { mean, cov })
    }

    /// Univariate Gaussian.
    pub fn scalar(mean: f64, var: f64) -> Result<Self> {
        Self::new(alloc::vec![mean], Matrix::scalar(var))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix {
        &self.cov
    }
}

fn check_gaussians(p: &GaussianParams, q: &GaussianParams) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(dim_err(format!("Gaussian dimensions differ: {} vs {}", p.dim(), q.dim())));
    }
    Ok(())
}

fn mean_gap(p: &GaussianParams, q: &GaussianParams) -> DVector<f64> {
    DVector::from_iterator(p.dim(), q.mean.iter().zip(&p.mean).map(|(b, a)| b - a))
}

/// Closed-form CS divergence between two Gaussians.
pub fn gaussian_cs(p: &GaussianParams, q: &GaussianParams, convention: Convention) -> Result<DivergenceValue> {
    check_gaussians(p, q)?;
    let d = p.dim() as f64;
    let s1 = to_na(&p.cov);
    let s2 = to_na(&q.cov);
    let sum = Spd::new(&s1 + &s2, "Σ₁ + Σ₂")?;
    let ld1 = Spd::new(s1, "Σ₁")?.log_det();
    let ld2 = Spd::new(s2, "Σ₂")?.log_det();
    let dm = mean_gap(p, q);
    let quad = dm.dot(&sum.solve_vec(&dm));
    let halved = 0.5 * quad + 0.5 * (sum.log_det() - d * core::f64::consts::LN_2 - 0.5 * (ld1 + ld2));
    Ok(DivergenceValue::Finite(match convention {
        Convention::Halved => halved,
        Convention::Eq10 => 2.0 * halved,
    }))
}

/// Closed-form `KL(p ‖ q)` between two Gaussians.
pub fn gaussian_kl(p: &GaussianParams, q: &GaussianParams) -> Result<DivergenceValue> {
    check_gaussians(p, q)?;
    let d = p.dim() as f64;
    let s1 = to_na(&p.cov);
    let s2 = Spd::new(to_na(&q.cov), "Σ₂")?;
    let ld1 = Spd::new(s1.clone(), "Σ₁")?.log_det();
    let trace = s2.solve(&s1).trace();
    let dm = mean_gap(p, q);
    let quad = dm.dot(&s2.solve_vec(&dm));
    Ok(DivergenceValue::Finite(0.5 * (trace - d + quad + s2.log_det() - ld1)))
}

/// A probability vector over K outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDist {
    probs: Vec<f64>,
}

impl DiscreteDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty);
        }
        if let Some(i) = probs.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidDistribution(format!("entry {i} is {}", probs[i])));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!("probabilities sum to {total}")));
        }
        Ok(Self { probs })
    }

    /// Normalizes nonnegative weights with a positive total.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidDistribution(format!("weights sum to {total}")));
        }
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let renorm: f64 = probs.iter().sum();
        Self::new(probs.iter().map(|p| p / renorm).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

fn check_support(p: &DiscreteDist, q: &DiscreteDist) -> Result<()> {
    if p.len() != q.len() {
        return Err(dim_err(format!("support sizes differ: {} vs {}", p.len(), q.len())));
    }
    Ok(())
}

/// CS ratio form on raw nonnegative vectors; invariant to rescaling either
/// argument.
pub fn discrete_cs_raw(p: &[f64], q: &[f64]) -> Result<DivergenceValue> {
    if p.len() != q.len() {
        return Err(dim_err(format!("support sizes differ: {} vs {}", p.len(), q.len())));
    }
    let dot: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
    if dot == 0.0 {
        return Ok(DivergenceValue::Infinite);
    }
    let pp: f64 = p.iter().map(|a| a * a).sum();
    let qq: f64 = q.iter().map(|b| b * b).sum();
    Ok(DivergenceValue::Finite(-(dot / (pp.sqrt() * qq.sqrt())).ln()))
}

/// `-log(Σpq / (√Σp² √Σq²))`.
pub fn discrete_cs(p: &DiscreteDist, q: &DiscreteDist) -> Result<DivergenceValue> {
    check_support(p, q)?;
    discrete_cs_raw(&p.probs, &q.probs)
}

/// `Σ p ln(p/q)` with `0 ln 0 = 0`.
pub fn discrete_kl(p: &DiscreteDist, q: &DiscreteDist) -> Result<DivergenceValue> {
    check_support(p, q)?;
    let mut acc = 0.0;
    for (&a, &b) in p.probs.iter().zip(&q.probs) {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Ok(DivergenceValue::Infinite);
        }
        acc += a * (a / b).ln();
    }
    Ok(DivergenceValue::Finite(acc))
}
