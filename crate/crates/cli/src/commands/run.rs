//! `csib train` and `csib sweep`: run files, data preparation, per-epoch
//! checkpoints and the information-plane output.

use std::cell::RefCell;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use csib_core::autodiff::{ModelGraph, ModelSpec, OptimizerKind};
use csib_core::data::{split, Dataset};
use csib_core::training::{
    evaluate, prepare, resume, run_point, sweep_with, EpochRecord, InfoPlanePoint, NormalizationMode, PointRun,
    TrainConfig, TrainState,
};
use csib_core::Error;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, RunInfo};
use crate::error::{CliError, CliResult};
use crate::io::{cell, csv_text, json_line, json_record, load_csv, parse_json, read_text, write_atomic};
use crate::{DataArgs, NormalizationArg, OptimizerArg, SweepArgs, TrainArgs, TrainOverrides};

/// Fractions used when neither the flag nor the run file sets a split.
pub const DEFAULT_SPLIT: [f64; 3] = [0.7, 0.1, 0.2];

pub const DEFAULT_BETAS: [f64; 5] = [0.0, 1e-3, 1e-2, 1e-1, 1.0];

/// Network shape without the data-determined input and output widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub encoder: Vec<usize>,
    pub decoder: Vec<usize>,
    pub noise_init: f64,
    pub learn_noise: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        let t = ModelSpec::tabular(1, 1);
        Self {
            encoder: t.encoder,
            decoder: t.decoder,
            noise_init: t.noise_init,
            learn_noise: t.learn_noise,
        }
    }
}

/// Contents of a `--config` file. Every section is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunFile {
    pub train: TrainConfig,
    pub model: ModelSection,
    pub split: Option<[f64; 3]>,
    pub target: Option<String>,
    pub betas: Option<Vec<f64>>,
}

impl TrainOverrides {
    pub fn apply(&self, mut c: TrainConfig) -> TrainConfig {
        if let Some(v) = self.beta {
            c.beta = v;
        }
        if let Some(v) = self.epochs {
            c.epochs = v;
        }
        if let Some(v) = self.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = self.lr {
            c.lr = v;
        }
        if let Some(v) = self.optimizer {
            c.optimizer = match v {
                OptimizerArg::Sgd => OptimizerKind::Sgd,
                OptimizerArg::Adam => OptimizerKind::Adam,
            };
        }
        if let Some(v) = self.sigma_x {
            c.sigma_x = v;
        }
        if let Some(v) = self.sigma_y {
            c.sigma_y = v;
        }
        if let Some(v) = self.sigma_t {
            c.sigma_t = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.normalization {
            c.normalization = match v {
                NormalizationArg::Minmax => NormalizationMode::MinMax,
                NormalizationArg::None => NormalizationMode::None,
            };
        }
        c
    }
}

/// Prepared data and settings for one run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub info: RunInfo,
    pub train: Dataset,
    /// Absent when the test fraction yields no rows.
    pub test: Option<Dataset>,
    pub betas: Option<Vec<f64>>,
}

fn load_run_file(path: Option<&Path>) -> CliResult<RunFile> {
    match path {
        Some(p) => parse_json(p, &read_text(p)?),
        None => Ok(RunFile::default()),
    }
}

fn fractions(flag: Option<&Vec<f64>>, file: Option<[f64; 3]>) -> CliResult<[f64; 3]> {
    match flag {
        Some(v) => <[f64; 3]>::try_from(v.as_slice())
            .map_err(|_| CliError::Usage(format!("--split takes three fractions, got {}", v.len()))),
        None => Ok(file.unwrap_or(DEFAULT_SPLIT)),
    }
}

/// Splits with the run seed, then fits the scaling on the training part.
fn split_and_scale(
    data: &Path,
    target: Option<&str>,
    fr: [f64; 3],
    cfg: &TrainConfig,
) -> CliResult<(Dataset, Option<Dataset>, Vec<String>, String)> {
    let (ds, names, target) = load_csv(data, target)?;
    let s = split(&ds, fr, cfg.seed)?;
    if s.train.len() < 2 {
        return Err(CliError::Usage(format!("the training part has {} rows; need at least 2", s.train.len())));
    }
    let (tr, rest) = prepare(&s.train, &[&s.test], cfg.normalization)?;
    let test = rest.into_iter().next().filter(|d| !d.is_empty());
    Ok((tr, test, names, target))
}

pub fn prepare_run(d: &DataArgs, o: &TrainOverrides) -> CliResult<Prepared> {
    let file = load_run_file(d.config.as_deref())?;
    let config = o.apply(file.train.clone());
    config.validate()?;
    let fr = fractions(d.split.as_ref(), file.split)?;
    let target = d.target.as_deref().or(file.target.as_deref());
    let (train, test, feature_names, target) = split_and_scale(&d.data, target, fr, &config)?;
    let m = &file.model;
    let spec = ModelSpec {
        input_dim: train.features.cols(),
        encoder: m.encoder.clone(),
        decoder: m.decoder.clone(),
        output_dim: train.targets.cols(),
        noise_init: m.noise_init,
        learn_noise: m.learn_noise,
    };
    spec.validate()?;
    Ok(Prepared {
        info: RunInfo {
            spec,
            config,
            split: fr,
            feature_names,
            target,
            normalization: train.normalization.clone(),
        },
        train,
        test,
        betas: file.betas,
    })
}

/// Reloads the data of a checkpointed run with its stored settings.
fn prepare_resume(d: &DataArgs, ck: &Checkpoint) -> CliResult<(Dataset, Option<Dataset>)> {
    let (train, test, names, _) = split_and_scale(&d.data, Some(&ck.target), ck.split, &ck.config)?;
    if names != ck.feature_names {
        return Err(CliError::Usage(format!(
            "{}: feature columns {names:?} differ from the checkpoint's {:?}",
            d.data.display(),
            ck.feature_names
        )));
    }
    if train.normalization != ck.normalization {
        return Err(CliError::Usage(format!(
            "{}: data differs from the checkpointed run (scaling does not match)",
            d.data.display()
        )));
    }
    Ok((train, test))
}

pub const LOG_COLUMNS: [&str; 9] = [
    "epoch",
    "loss",
    "prediction",
    "i_xt",
    "rmse_train",
    "rmse_test",
    "joint_embedding_sq",
    "product_embedding_sq",
    "noise_std_mean",
];

fn log_row(r: &EpochRecord) -> Vec<String> {
    vec![
        r.epoch.to_string(),
        cell(Some(r.loss)),
        cell(Some(r.prediction)),
        cell(r.i_xt),
        cell(Some(r.rmse_train)),
        cell(r.rmse_test),
        cell(Some(r.joint_embedding_sq)),
        cell(Some(r.product_embedding_sq)),
        cell(Some(r.noise_std_mean)),
    ]
}

/// Rewrites checkpoint.json, log.jsonl and log.csv under `out`.
pub fn write_run(out: &Path, info: &RunInfo, state: &TrainState) -> CliResult<()> {
    Checkpoint::new(info, state).save(&out.join("checkpoint.json"))?;
    let jsonl: String = state.log.iter().map(|r| json_line(&json_record(r, &[]))).collect();
    write_atomic(&out.join("log.jsonl"), jsonl.as_bytes())?;
    let rows: Vec<Vec<String>> = state.log.iter().map(log_row).collect();
    write_atomic(&out.join("log.csv"), csv_text(&LOG_COLUMNS, &rows)?.as_bytes())
}

pub fn train(a: &TrainArgs) -> CliResult<()> {
    let ck_path = a.out.join("checkpoint.json");
    let (info, state, train_set, test_set) = if a.resume {
        let ck = Checkpoint::load(&ck_path)?;
        let mut info = ck.info();
        if let Some(e) = a.overrides.epochs {
            info.config.epochs = e;
        }
        let (tr, te) = prepare_resume(&a.data, &ck)?;
        (info, ck.state(), tr, te)
    } else {
        let p = prepare_run(&a.data, &a.overrides)?;
        let model = ModelGraph::new(&p.info.spec, p.info.config.seed)?;
        let state = TrainState::new(model, &p.info.config)?;
        (p.info, state, p.train, p.test)
    };
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    let write_failure: RefCell<Option<CliError>> = RefCell::new(None);
    let mut on_epoch = |s: &TrainState| {
        write_run(&a.out, &info, s).map_err(|e| {
            let msg = e.to_string();
            *write_failure.borrow_mut() = Some(e);
            Error::Contract(format!("checkpoint write failed: {msg}"))
        })
    };
    let result = resume(state, &train_set, test_set.as_ref(), &info.config, &mut on_epoch);
    if let Some(e) = write_failure.into_inner() {
        return Err(e);
    }
    let state = match result {
        Ok(s) => s,
        Err(f) => {
            write_run(&a.out, &info, &f.last_good)?;
            return Err(CliError::Training(f.to_string()));
        }
    };
    write_run(&a.out, &info, &state)?;
    let eval = evaluate(&state.model, &train_set, test_set.as_ref(), &info.config)?;
    let summary = json_record(&eval, &[("i_yt_proxy", eval.i_yt_proxy)]);
    write_atomic(&a.out.join("summary.json"), json_line(&summary).as_bytes())?;
    print!("{}", json_line(&summary));
    Ok(())
}

pub const POINT_COLUMNS: [&str; 9] = [
    "beta",
    "i_xt",
    "i_xt_raw",
    "i_yt_proxy",
    "r",
    "rmse_train",
    "rmse_test",
    "epochs",
    "seed",
];

fn point_row(p: &InfoPlanePoint) -> Vec<String> {
    vec![
        cell(Some(p.beta)),
        cell(Some(p.i_xt)),
        cell(Some(p.i_xt_raw)),
        cell(Some(p.i_yt_proxy)),
        cell(p.r),
        cell(Some(p.rmse_train)),
        cell(p.rmse_test),
        p.epochs.to_string(),
        p.seed.to_string(),
    ]
}

pub fn point_json(p: &InfoPlanePoint) -> serde_json::Value {
    json_record(p, &[("i_yt_proxy", p.i_yt_proxy)])
}

/// Runs every β on up to `workers` threads; results keep grid order.
pub fn parallel_runner(
    spec: &ModelSpec,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    cfg: &TrainConfig,
    workers: usize,
    betas: &[f64],
) -> Vec<csib_core::Result<PointRun>> {
    let next = AtomicUsize::new(0);
    let done = Mutex::new(Vec::with_capacity(betas.len()));
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, betas.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&b) = betas.get(i) else { break };
                let r = run_point(spec, b, train_set, test_set, cfg);
                done.lock().expect("no worker panicked").push((i, r));
            });
        }
    });
    let mut done = done.into_inner().expect("no worker panicked");
    done.sort_by_key(|(i, _)| *i);
    done.into_iter().map(|(_, r)| r).collect()
}

fn checkpoint_name(index: usize, beta: f64) -> PathBuf {
    PathBuf::from(format!("checkpoints/{index:02}-beta-{beta}.json"))
}

pub fn sweep(a: &SweepArgs) -> CliResult<()> {
    if a.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let p = prepare_run(&a.data, &a.overrides)?;
    let betas = a.betas.clone().or(p.betas.clone()).unwrap_or_else(|| DEFAULT_BETAS.to_vec());
    let info = &p.info;
    let runner = |bs: &[f64]| parallel_runner(&info.spec, &p.train, p.test.as_ref(), &info.config, a.workers, bs);
    let outcome = sweep_with(&betas, &info.config, &runner)?;

    let jsonl: String = outcome.points.iter().map(|q| json_line(&point_json(q))).collect();
    write_atomic(&a.out.join("points.jsonl"), jsonl.as_bytes())?;
    let rows: Vec<Vec<String>> = outcome.points.iter().map(point_row).collect();
    write_atomic(&a.out.join("points.csv"), csv_text(&POINT_COLUMNS, &rows)?.as_bytes())?;
    for (i, run) in outcome.runs.iter().enumerate() {
        let ri = RunInfo {
            config: TrainConfig { beta: run.beta, ..info.config.clone() },
            ..info.clone()
        };
        Checkpoint::new(&ri, &run.state).save(&a.out.join(checkpoint_name(i, run.beta)))?;
    }
    let summary = serde_json::json!({
        "points": outcome.points.len(),
        "failures": outcome.failures,
        "reference_i_xt": outcome.reference.map(|r| r.i_xt),
    });
    write_atomic(&a.out.join("sweep.json"), json_line(&summary).as_bytes())?;
    print!("{jsonl}");
    if !outcome.failures.is_empty() {
        let list: Vec<String> = outcome.failures.iter().map(|f| format!("β={}: {}", f.beta, f.message)).collect();
        return Err(CliError::Training(list.join("; ")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_replace_only_given_fields() {
        let o = TrainOverrides {
            beta: Some(0.5),
            optimizer: Some(OptimizerArg::Sgd),
            ..TrainOverrides::default()
        };
        let base = TrainConfig {
            lr: 0.02,
            ..TrainConfig::default()
        };
        let c = o.apply(base.clone());
        assert_eq!(c.beta, 0.5);
        assert_eq!(c.optimizer, OptimizerKind::Sgd);
        assert_eq!(c.lr, 0.02);
        assert_eq!(TrainOverrides::default().apply(base.clone()), base);
    }

    #[test]
    fn run_file_rejects_unknown_fields() {
        let p = Path::new("run.json");
        let e = parse_json::<RunFile>(p, r#"{"train": {"epocs": 3}}"#).unwrap_err().to_string();
        assert!(e.contains("train"), "{e}");
        let f: RunFile = parse_json(p, r#"{"model": {"encoder": [4]}, "split": [0.5, 0.25, 0.25]}"#).unwrap();
        assert_eq!(f.model.encoder, [4]);
        assert_eq!(f.model.decoder, ModelSection::default().decoder);
        assert_eq!(f.split, Some([0.5, 0.25, 0.25]));
    }

    #[test]
    fn split_flag_needs_three_values() {
        assert!(fractions(Some(&vec![0.5, 0.5]), None).is_err());
        assert_eq!(fractions(None, None).unwrap(), DEFAULT_SPLIT);
    }
}
