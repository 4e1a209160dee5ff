//! `csib attack`: FGSM or PGD against a checkpointed model.

use csib_core::attacks::{evaluate_robustness, AttackConfig, AttackKind};

use crate::checkpoint::Checkpoint;
use crate::error::{CliError, CliResult};
use crate::io::{json_line, json_record, load_csv, write_atomic};
use crate::{AttackArg, AttackArgs};

pub fn config(a: &AttackArgs) -> AttackConfig {
    AttackConfig {
        kind: match a.kind {
            AttackArg::Fgsm => AttackKind::Fgsm,
            AttackArg::Pgd => AttackKind::Pgd,
        },
        epsilon: a.epsilon,
        rho: a.rho,
        alpha: a.alpha,
        steps: a.steps,
        clip: a.clip_attack,
    }
}

pub fn attack(a: &AttackArgs) -> CliResult<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let cfg = config(a);
    cfg.validate()?;
    let (raw, names, _) = load_csv(&a.data, Some(a.target.as_deref().unwrap_or(&ck.target)))?;
    if names.len() != ck.model.input_dim() {
        return Err(CliError::Usage(format!(
            "{} has {} feature columns, the model expects {}",
            a.data.display(),
            names.len(),
            ck.model.input_dim()
        )));
    }
    let data = match &ck.normalization {
        Some(n) => raw.normalized_with(n)?,
        None => raw,
    };
    let report = evaluate_robustness(&ck.model, &data, &cfg)?;
    let line = json_line(&json_record(&report, &[]));
    if let Some(p) = &a.output {
        write_atomic(p, line.as_bytes())?;
    }
    print!("{line}");
    Ok(())
}
