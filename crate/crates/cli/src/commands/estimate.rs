//! `csib estimate`: one estimator on CSV samples, printed as a JSON line.

use csib_core::conditional::{conditional_cs, conditional_mmd, PredictionBatch};
use csib_core::dependence::{cs_qmi, hsic_biased, nib_kde_bound, normalized_cs_qmi};
use csib_core::divergence::{empirical_cs, empirical_mmd_sq};
use csib_core::{KernelSpec, SampleMatrix};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::io::{json_line, json_record, load_samples};
use crate::{EstimateArgs, Measure};

#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    pub measure: &'static str,
    pub value: f64,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ridge: Option<f64>,
}

fn name(m: Measure) -> &'static str {
    match m {
        Measure::Cs => "cs",
        Measure::Mmd => "mmd",
        Measure::Hsic => "hsic",
        Measure::Csqmi => "csqmi",
        Measure::NormalizedCsqmi => "normalized-csqmi",
        Measure::ConditionalCs => "conditional-cs",
        Measure::ConditionalMmd => "conditional-mmd",
        Measure::NibBound => "nib-bound",
    }
}

/// Computes the estimate without printing; the value is in nats where the
/// measure has units.
pub fn compute(a: &EstimateArgs, inputs: &[SampleMatrix]) -> CliResult<Estimate> {
    let m = a.measure;
    if inputs.len() != m.inputs() {
        return Err(CliError::Usage(format!(
            "{} takes {} input files, got {}",
            name(m),
            m.inputs(),
            inputs.len()
        )));
    }
    let sx = KernelSpec::new(a.sigma_x)?;
    let sy = KernelSpec::new(a.sigma_y)?;
    let st = KernelSpec::new(a.sigma_t)?;
    let mut e = Estimate {
        measure: name(m),
        value: 0.0,
        n: inputs[0].rows(),
        sigma_x: None,
        sigma_y: None,
        sigma_t: None,
        ridge: None,
    };
    e.value = match m {
        Measure::Cs => {
            e.sigma_x = Some(a.sigma_x);
            empirical_cs(&inputs[0], &inputs[1], sx)?.nats()
        }
        Measure::Mmd => {
            e.sigma_x = Some(a.sigma_x);
            empirical_mmd_sq(&inputs[0], &inputs[1], sx)?
        }
        Measure::Hsic | Measure::Csqmi | Measure::NormalizedCsqmi => {
            e.sigma_x = Some(a.sigma_x);
            e.sigma_t = Some(a.sigma_t);
            let f = match m {
                Measure::Hsic => hsic_biased,
                Measure::Csqmi => cs_qmi,
                _ => normalized_cs_qmi,
            };
            f(&inputs[0], &inputs[1], sx, st)?.nats()
        }
        Measure::ConditionalCs | Measure::ConditionalMmd => {
            e.sigma_x = Some(a.sigma_x);
            e.sigma_y = Some(a.sigma_y);
            let batch = PredictionBatch::new(inputs[0].clone(), inputs[1].clone(), inputs[2].clone())?;
            if m == Measure::ConditionalCs {
                conditional_cs(&batch, sx, sy)?.nats()
            } else {
                e.ridge = Some(a.ridge);
                conditional_mmd(&batch, sx, sy, a.ridge)?
            }
        }
        Measure::NibBound => {
            e.sigma_t = Some(a.sigma_t);
            nib_kde_bound(&inputs[0], a.sigma_t)?
        }
    };
    Ok(e)
}

pub fn estimate(a: &EstimateArgs) -> CliResult<()> {
    let inputs = a.files.iter().map(|p| load_samples(p)).collect::<CliResult<Vec<_>>>()?;
    let e = compute(a, &inputs)?;
    print!("{}", json_line(&json_record(&e, &[("value", e.value)])));
    if e.value.is_infinite() {
        return Err(CliError::Infinite(format!("{} has no numerical overlap", e.measure)));
    }
    Ok(())
}
