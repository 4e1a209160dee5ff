//! White-box ℓ∞ attacks on a trained regressor: FGSM and PGD on the plain
//! MSE, with the encoder noise held at its mean.

use alloc::format;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ModelGraph, Noise};
use crate::conditional::mse;
use crate::data::Dataset;
use crate::error::{dim_err, Error, Result};
use crate::kernel::SampleMatrix;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Fgsm,
    Pgd,
}

/// Defaults: FGSM ε = 0.1; PGD ρ = 0.3, α = 0.1, 5 steps; no clipping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub epsilon: f64,
    pub rho: f64,
    pub alpha: f64,
    pub steps: usize,
    /// Clip perturbed inputs to [0, 1].
    pub clip: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            kind: AttackKind::Pgd,
            epsilon: 0.1,
            rho: 0.3,
            alpha: 0.1,
            steps: 5,
            clip: false,
        }
    }
}

impl AttackConfig {
    /// Radii may be zero, which makes the attack a no-op.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("epsilon", self.epsilon), ("rho", self.rho), ("alpha", self.alpha)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a nonnegative number, got {v}")));
            }
        }
        if self.steps == 0 {
            return Err(Error::Config("PGD needs at least one step".into()));
        }
        Ok(())
    }
}

/// Perturbed inputs plus whether the input gradient vanished everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbed {
    pub x: SampleMatrix,
    /// Set when some step saw an all-zero gradient; that step left x as is.
    pub zero_gradient: bool,
}

/// `∂ MSE / ∂x` at noise mean.
pub fn input_gradient(model: &ModelGraph, x: &Matrix, y: &SampleMatrix) -> Result<Matrix> {
    if y.rows() != x.rows() || y.cols() != model.output_dim() {
        return Err(dim_err(format!(
            "targets are {}x{}, expected {}x{}",
            y.rows(),
            y.cols(),
            x.rows(),
            model.output_dim()
        )));
    }
    let mut f = model.forward(x, Noise::Mean, true)?;
    let yv = f.tape.constant(y.matrix().clone());
    let d = f.tape.sub(f.y_hat, yv)?;
    let sq = f.tape.square(d);
    let s = f.tape.sum(sq);
    let loss = f.tape.scale(s, 1.0 / x.rows() as f64);
    let g = f.tape.backward(loss)?;
    Ok(g.get_or_zeros(f.x, x))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn clip01(m: &mut Matrix) {
    for v in m.as_mut_slice() {
        *v = v.clamp(0.0, 1.0);
    }
}

/// `x + ε·sign(∇ₓ MSE)`. The MSE is row-separable, so every row receives
/// the same perturbation a per-example attack would give it.
pub fn fgsm(model: &ModelGraph, x: &SampleMatrix, y: &SampleMatrix, epsilon: f64, clip: bool) -> Result<Perturbed> {
    let g = input_gradient(model, x.matrix(), y)?;
    let zero = g.as_slice().iter().all(|v| *v == 0.0);
    let mut out = x.matrix().zip_map(&g, |a, b| a + epsilon * sign(b));
    if clip {
        clip01(&mut out);
    }
    Ok(Perturbed {
        x: SampleMatrix::new(out)?,
        zero_gradient: zero,
    })
}

/// Projected signed-gradient ascent from `x₀` without a random start; each
/// iterate is clamped into `[x₀ - ρ, x₀ + ρ]`.
pub fn pgd(
    model: &ModelGraph,
    x: &SampleMatrix,
    y: &SampleMatrix,
    rho: f64,
    alpha: f64,
    steps: usize,
    clip: bool,
) -> Result<Perturbed> {
    let x0 = x.matrix();
    let mut cur = x0.clone();
    let mut zero = false;
    for _ in 0..steps {
        let g = input_gradient(model, &cur, y)?;
        zero |= g.as_slice().iter().all(|v| *v == 0.0);
        let stepped = cur.zip_map(&g, |a, b| a + alpha * sign(b));
        cur = stepped.zip_map(x0, |v, o| v.clamp(o - rho, o + rho));
        if clip {
            clip01(&mut cur);
        }
    }
    Ok(Perturbed {
        x: SampleMatrix::new(cur)?,
        zero_gradient: zero,
    })
}

/// Robustness report, serialized as `{attack, params, clean_rmse, attacked_rmse, n}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub attack: AttackKind,
    pub params: AttackConfig,
    pub clean_rmse: f64,
    pub attacked_rmse: f64,
    pub n: usize,
    pub zero_gradient: bool,
}

pub fn attack(model: &ModelGraph, x: &SampleMatrix, y: &SampleMatrix, cfg: &AttackConfig) -> Result<Perturbed> {
    cfg.validate()?;
    match cfg.kind {
        AttackKind::Fgsm => fgsm(model, x, y, cfg.epsilon, cfg.clip),
        AttackKind::Pgd => pgd(model, x, y, cfg.rho, cfg.alpha, cfg.steps, cfg.clip),
    }
}

/// Clean and attacked RMSE on `test`.
pub fn evaluate_robustness(model: &ModelGraph, test: &Dataset, cfg: &AttackConfig) -> Result<RobustnessReport> {
    if test.features.cols() != model.input_dim() {
        return Err(dim_err(format!(
            "data has {} features, model expects {}",
            test.features.cols(),
            model.input_dim()
        )));
    }
    let clean = SampleMatrix::new(model.predict(test.features.matrix())?)?;
    let adv = attack(model, &test.features, &test.targets, cfg)?;
    let attacked = SampleMatrix::new(model.predict(adv.x.matrix())?)?;
    Ok(RobustnessReport {
        attack: cfg.kind,
        params: *cfg,
        clean_rmse: mse(&test.targets, &clean)?.sqrt(),
        attacked_rmse: mse(&test.targets, &attacked)?.sqrt(),
        n: test.len(),
        zero_gradient: adv.zero_gradient,
    })
}
