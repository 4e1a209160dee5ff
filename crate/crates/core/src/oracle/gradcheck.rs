//! Tape gradients of the full CS-IB loss against central finite differences
//! of the plain-arithmetic loss.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ModelGraph, ModelSpec, Noise};
use crate::conditional::PredictionBatch;
use crate::error::{Error, Result};
use crate::kernel::SampleMatrix;
use crate::matrix::Matrix;
use crate::rng::{derive_seed, stream, Rng};
use crate::training::{cs_ib_loss, record_cs_ib_loss, TrainConfig};

/// Largest accepted `|a − f| / max(|a| + |f|, 1e-4)`.
pub const GRADCHECK_TOL: f64 = 1e-4;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-6;

/// Rows per random batch.
pub const GRADCHECK_ROWS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub models: usize,
    /// Parameter entries compared.
    pub entries: usize,
    pub max_rel_error: f64,
    /// Entries above [`GRADCHECK_TOL`].
    pub failures: usize,
}

pub fn rel_error(a: f64, f: f64) -> f64 {
    (a - f).abs() / (a.abs() + f.abs()).max(1e-4)
}

struct Case {
    model: ModelGraph,
    x: Matrix,
    y: Matrix,
    eps: Matrix,
    cfg: TrainConfig,
}

fn random_case(rng: &mut Rng, seed: u64) -> Result<Case> {
    let input_dim = 2 + rng.below(3);
    let output_dim = 1 + rng.below(2);
    let spec = ModelSpec {
        input_dim,
        encoder: alloc::vec![3 + rng.below(3)],
        decoder: alloc::vec![3 + rng.below(2)],
        output_dim,
        noise_init: 0.1,
        learn_noise: true,
    };
    let model = ModelGraph::new(&spec, seed)?;
    let n = GRADCHECK_ROWS;
    let x = rng.normal_matrix(n, input_dim);
    let y = rng.normal_matrix(n, output_dim);
    let eps = rng.normal_matrix(n, model.t_dim());
    let betas = [0.0, 0.01, 0.1, 1.0];
    let cfg = TrainConfig {
        beta: betas[rng.below(betas.len())],
        sigma_x: rng.uniform_range(0.5, 2.0),
        sigma_y: rng.uniform_range(0.5, 2.0),
        sigma_t: rng.uniform_range(0.5, 2.0),
        ..TrainConfig::default()
    };
    Ok(Case { model, x, y, eps, cfg })
}

fn plain_loss(c: &Case, model: &ModelGraph) -> Result<f64> {
    let f = model.forward(&c.x, Noise::Draws(&c.eps), false)?;
    let t = SampleMatrix::new(f.tape.value(f.t).clone())?;
    let y_hat = SampleMatrix::new(f.tape.value(f.y_hat).clone())?;
    let batch = PredictionBatch::new(SampleMatrix::new(c.x.clone())?, SampleMatrix::new(c.y.clone())?, y_hat)?;
    Ok(cs_ib_loss(&batch, &t, &c.cfg)?.total)
}

fn tape_grads(c: &Case) -> Result<Vec<Matrix>> {
    let mut f = c.model.forward(&c.x, Noise::Draws(&c.eps), false)?;
    let nodes = record_cs_ib_loss(&mut f.tape, &c.x, &c.y, f.y_hat, f.t, &c.cfg)?;
    let g = f.tape.backward(nodes.total)?;
    Ok(f
        .params
        .iter()
        .zip(c.model.params())
        .map(|(v, p)| g.get_or_zeros(*v, p))
        .collect())
}

/// Compares every parameter entry of `models` random small networks.
pub fn gradcheck(models: usize, seed: u64) -> Result<GradcheckReport> {
    if models == 0 {
        return Err(Error::Config("at least one model is required".into()));
    }
    let mut rng = Rng::new(seed, stream::ORACLE);
    let mut report = GradcheckReport {
        models,
        entries: 0,
        max_rel_error: 0.0,
        failures: 0,
    };
    for m in 0..models {
        let case = random_case(&mut rng, derive_seed(seed, &[m as u64]))?;
        let grads = tape_grads(&case)?;
        for (pi, g) in grads.iter().enumerate() {
            for k in 0..g.as_slice().len() {
                let mut up = case.model.clone();
                up.params_mut()[pi].as_mut_slice()[k] += FD_STEP;
                let mut dn = case.model.clone();
                dn.params_mut()[pi].as_mut_slice()[k] -= FD_STEP;
                let fd = (plain_loss(&case, &up)? - plain_loss(&case, &dn)?) / (2.0 * FD_STEP);
                let e = rel_error(g.as_slice()[k], fd);
                report.entries += 1;
                if !(e < GRADCHECK_TOL) {
                    report.failures += 1;
                }
                if !(e <= report.max_rel_error) {
                    report.max_rel_error = e;
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_agrees() {
        let r = gradcheck(3, 5).unwrap();
        assert_eq!(r.failures, 0, "{r:?}");
        assert!(r.entries > 30);
    }

    #[test]
    fn rel_error_floor() {
        assert_eq!(rel_error(0.0, 0.0), 0.0);
        assert!((rel_error(1e-9, 0.0) - 1e-5).abs() < 1e-18);
        assert!((rel_error(1.0, 3.0) - 0.5).abs() < 1e-15);
    }
}
