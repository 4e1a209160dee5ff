//! SGD and Adam updates over a [`ModelGraph`]'s parameters.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::nn::ModelGraph;
use crate::error::{dim_err, Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Optimizer hyperparameters plus Adam's running moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Completed update count.
    pub steps: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, lr: f64) -> Result<Self> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be a nonnegative number, got {lr}")));
        }
        Ok(Self {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 0,
            m: Vec::new(),
            v: Vec::new(),
        })
    }

    pub fn sgd(lr: f64) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, lr)
    }

    pub fn adam(lr: f64) -> Result<Self> {
        Self::new(OptimizerKind::Adam, lr)
    }

    /// Applies one update. Gradients follow [`ModelGraph::params`] order.
    /// σ is frozen when the model does not learn it and is clamped at zero
    /// afterwards. A non-finite gradient aborts before anything changes.
    pub fn step(&mut self, model: &mut ModelGraph, grads: &[Matrix]) -> Result<()> {
        let noise_idx = model.noise_param_index();
        let learn_noise = model.learn_noise;
        let mut params = model.params_mut();
        if grads.len() != params.len() {
            return Err(dim_err(format!("{} gradients for {} parameters", grads.len(), params.len())));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(dim_err(format!("gradient {i} has the wrong shape")));
            }
            if let Some(pos) = g.as_slice().iter().position(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite gradient in parameter {i}, entry {pos}"
                )));
            }
        }
        if self.kind == OptimizerKind::Adam && self.m.is_empty() {
            self.m = params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
            self.v = self.m.clone();
        }
        self.steps += 1;
        let t = self.steps as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (i, (p, g)) in params.iter_mut().enumerate().map(|(i, p)| (i, (p, &grads[i]))) {
            if i == noise_idx && !learn_noise {
                continue;
            }
            match self.kind {
                OptimizerKind::Sgd => p.axpy(-self.lr, g),
                OptimizerKind::Adam => {
                    let (m, v) = (&mut self.m[i], &mut self.v[i]);
                    let (ps, ms, vs) = (p.as_mut_slice(), m.as_mut_slice(), v.as_mut_slice());
                    for (((pv, mv), vv), &gv) in ps.iter_mut().zip(ms).zip(vs).zip(g.as_slice()) {
                        *mv = b1 * *mv + (1.0 - b1) * gv;
                        *vv = b2 * *vv + (1.0 - b2) * gv * gv;
                        let mh = *mv / c1;
                        let vh = *vv / c2;
                        *pv -= self.lr * mh / (vh.sqrt() + self.eps);
                    }
                }
            }
        }
        drop(params);
        for s in model.noise_std.as_mut_slice() {
            if *s < 0.0 {
                *s = 0.0;
            }
        }
        Ok(())
    }
}
