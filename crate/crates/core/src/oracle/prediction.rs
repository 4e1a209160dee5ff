//! Randomized checks of the conditional CS prediction loss: its sign on
//! random batches and its agreement with MSE in the narrow-kernel limit.

use serde::{Deserialize, Serialize};

use crate::conditional::{conditional_cs, mse, PredictionBatch};
use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, SampleMatrix};
use crate::matrix::Matrix;
use crate::rng::{stream, Rng};

/// Values above `-NONNEG_SLACK` count as nonnegative.
pub const NONNEG_SLACK: f64 = 1e-9;

/// Kernel width of the narrow-kernel ranking check.
pub const NARROW_SIGMA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonnegReport {
    pub trials: usize,
    /// Batches scoring below `-NONNEG_SLACK`.
    pub negatives: usize,
    pub min_value: f64,
}

/// Random batches with N in 2..=10, dim(x) in 1..=3, dim(y) in 1..=2,
/// every entry `U(−2, 2)` and both widths `U(0.3, 2)`.
pub fn random_prediction_batch(rng: &mut Rng) -> Result<(PredictionBatch, KernelSpec, KernelSpec)> {
    let n = 2 + rng.below(9);
    let d = 1 + rng.below(3);
    let q = 1 + rng.below(2);
    let mut u = |r: usize, c: usize| SampleMatrix::new(Matrix::from_fn(r, c, |_, _| rng.uniform_range(-2.0, 2.0)));
    let x = u(n, d)?;
    let y = u(n, q)?;
    let y_hat = u(n, q)?;
    let sx = KernelSpec::new(rng.uniform_range(0.3, 2.0))?;
    let sy = KernelSpec::new(rng.uniform_range(0.3, 2.0))?;
    Ok((PredictionBatch::new(x, y, y_hat)?, sx, sy))
}

pub fn conditional_nonnegativity(trials: usize, seed: u64) -> Result<NonnegReport> {
    if trials == 0 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    let mut rng = Rng::new(seed, stream::ORACLE);
    let mut r = NonnegReport {
        trials,
        negatives: 0,
        min_value: f64::INFINITY,
    };
    for _ in 0..trials {
        let (b, sx, sy) = random_prediction_batch(&mut rng)?;
        let v = conditional_cs(&b, sx, sy)?.nats();
        if v < -NONNEG_SLACK {
            r.negatives += 1;
        }
        r.min_value = r.min_value.min(v);
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub pairs: usize,
    pub agreements: usize,
}

/// Orders candidate pairs by conditional CS and by MSE with inputs spaced
/// `10σ` apart and residuals at most `σ/100`, and counts agreements.
pub fn mse_ranking_agreement(pairs: usize, seed: u64) -> Result<RankingReport> {
    if pairs == 0 {
        return Err(Error::Config("at least one pair is required".into()));
    }
    let spec = KernelSpec::new(NARROW_SIGMA)?;
    let mut rng = Rng::new(seed, stream::ORACLE);
    let mut agreements = 0;
    for _ in 0..pairs {
        let n = 4 + rng.below(13);
        let x: alloc::vec::Vec<f64> = (0..n).map(|i| 10.0 * NARROW_SIGMA * i as f64).collect();
        let x = SampleMatrix::column(&x)?;
        let y = rng.normal_matrix(n, 1);
        let candidate = |rng: &mut Rng| -> Result<SampleMatrix> {
            let scale = rng.uniform_range(0.1, 1.0) * NARROW_SIGMA / 100.0;
            let u = Matrix::from_fn(n, 1, |_, _| rng.uniform_range(-1.0, 1.0));
            SampleMatrix::new(y.zip_map(&u, |v, e| v + scale * e))
        };
        let (a, b) = (candidate(&mut rng)?, candidate(&mut rng)?);
        let ys = SampleMatrix::new(y.clone())?;
        let score = |yh: &SampleMatrix| -> Result<(f64, f64)> {
            let batch = PredictionBatch::new(x.clone(), ys.clone(), yh.clone())?;
            Ok((conditional_cs(&batch, spec, spec)?.nats(), mse(&ys, yh)?))
        };
        let ((ca, ma), (cb, mb)) = (score(&a)?, score(&b)?);
        if (ca < cb) == (ma < mb) && (ca == cb) == (ma == mb) {
            agreements += 1;
        }
    }
    Ok(RankingReport { pairs, agreements })
}
