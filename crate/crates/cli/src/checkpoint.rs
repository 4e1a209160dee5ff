//! Versioned JSON checkpoints holding everything needed to resume a run.

use std::path::Path;

use csib_core::autodiff::{ModelGraph, ModelSpec, OptimizerState};
use csib_core::data::Normalization;
use csib_core::training::{EpochRecord, TrainConfig, TrainState};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io::{parse_json, read_text, write_atomic};

pub const CHECKPOINT_FORMAT: &str = "csib-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Floats are written at full precision so a reload is exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub spec: ModelSpec,
    pub config: TrainConfig,
    pub split: [f64; 3],
    pub feature_names: Vec<String>,
    pub target: String,
    pub normalization: Option<Normalization>,
    pub epochs_done: usize,
    pub model: ModelGraph,
    pub optimizer: OptimizerState,
    pub log: Vec<EpochRecord>,
}

/// Run settings that do not change between epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunInfo {
    pub spec: ModelSpec,
    pub config: TrainConfig,
    pub split: [f64; 3],
    pub feature_names: Vec<String>,
    pub target: String,
    pub normalization: Option<Normalization>,
}

impl Checkpoint {
    pub fn new(info: &RunInfo, state: &TrainState) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            spec: info.spec.clone(),
            config: info.config.clone(),
            split: info.split,
            feature_names: info.feature_names.clone(),
            target: info.target.clone(),
            normalization: info.normalization.clone(),
            epochs_done: state.epochs_done(),
            model: state.model.clone(),
            optimizer: state.optimizer.clone(),
            log: state.log.clone(),
        }
    }

    pub fn state(&self) -> TrainState {
        TrainState {
            model: self.model.clone(),
            optimizer: self.optimizer.clone(),
            log: self.log.clone(),
        }
    }

    pub fn info(&self) -> RunInfo {
        RunInfo {
            spec: self.spec.clone(),
            config: self.config.clone(),
            split: self.split,
            feature_names: self.feature_names.clone(),
            target: self.target.clone(),
            normalization: self.normalization.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let ck: Self = parse_json(path, &read_text(path)?)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(CliError::parse(path, format!("field `format`: expected {CHECKPOINT_FORMAT:?}, found {:?}", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(CliError::parse(path, format!("field `version`: unsupported version {}", ck.version)));
        }
        if ck.epochs_done != ck.log.len() {
            return Err(CliError::parse(
                path,
                format!("field `epochs_done`: {} but the log has {} records", ck.epochs_done, ck.log.len()),
            ));
        }
        ck.model.validate().map_err(|e| CliError::parse(path, format!("field `model`: {e}")))?;
        if ck.model.input_dim() != ck.feature_names.len() {
            return Err(CliError::parse(path, "field `feature_names`: length differs from the model input"));
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let spec = ModelSpec {
            input_dim: 2,
            encoder: vec![3],
            decoder: vec![2],
            output_dim: 1,
            noise_init: 0.1,
            learn_noise: true,
        };
        let config = TrainConfig::default();
        let state = TrainState::new(ModelGraph::new(&spec, 4).unwrap(), &config).unwrap();
        let info = RunInfo {
            spec,
            config,
            split: [0.7, 0.1, 0.2],
            feature_names: vec!["a".into(), "b".into()],
            target: "y".into(),
            normalization: None,
        };
        Checkpoint::new(&info, &state)
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        let ck = sample();
        ck.save(&p).unwrap();
        assert_eq!(Checkpoint::load(&p).unwrap(), ck);
    }

    #[test]
    fn bad_fields_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        let mut v = serde_json::to_value(sample()).unwrap();
        v["config"]["lr"] = serde_json::json!("fast");
        std::fs::write(&p, v.to_string()).unwrap();
        let e = Checkpoint::load(&p).unwrap_err().to_string();
        assert!(e.contains("config.lr"), "{e}");

        let mut v = serde_json::to_value(sample()).unwrap();
        v["version"] = serde_json::json!(9);
        std::fs::write(&p, v.to_string()).unwrap();
        assert!(Checkpoint::load(&p).unwrap_err().to_string().contains("version"));
    }
}
