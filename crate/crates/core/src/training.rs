//! The CS-IB objective `D_CS(p(y|x) ‖ q(ŷ|x)) + β·I_CS(x;t)`, the seeded
//! mini-batch trainer, β sweeps and information-plane summaries.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ModelGraph, ModelSpec, Noise, OptimizerKind, OptimizerState, Tape, Var};
use crate::conditional::{conditional_cs, mse, PredictionBatch, LOG_UNDERFLOW};
use crate::data::{Dataset, MinMax, Normalization};
use crate::dependence::{check_self_dependence, cs_qmi_from_grams, cs_qmi_parts, normalized_cs_qmi};
use crate::divergence::DivergenceValue;
use crate::error::{dim_err, Error, Result};
use crate::kernel::{gram, sqdist_raw, KernelSpec, SampleMatrix};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, stream, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizationMode {
    /// Per-column [0, 1] scaling fitted on the training part.
    MinMax,
    None,
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_t: f64,
    pub seed: u64,
    pub normalization: NormalizationMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 0.0,
            epochs: 100,
            batch_size: 128,
            optimizer: OptimizerKind::Adam,
            lr: 1e-3,
            sigma_x: 1.0,
            sigma_y: 1.0,
            sigma_t: 1.0,
            seed: 0,
            normalization: NormalizationMode::MinMax,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be a nonnegative number, got {}", self.beta)));
        }
        // Gram-based losses are undefined for a single row
        if self.batch_size < 2 {
            return Err(Error::Config(format!("batch_size must be at least 2, got {}", self.batch_size)));
        }
        self.kernels()?;
        OptimizerState::new(self.optimizer, self.lr)?;
        Ok(())
    }

    /// Kernels for x, y and t.
    pub fn kernels(&self) -> Result<(KernelSpec, KernelSpec, KernelSpec)> {
        Ok((
            KernelSpec::new(self.sigma_x)?,
            KernelSpec::new(self.sigma_y)?,
            KernelSpec::new(self.sigma_t)?,
        ))
    }
}

/// Fits the configured scaling on `train` and applies it to every part.
pub fn prepare(train: &Dataset, others: &[&Dataset], mode: NormalizationMode) -> Result<(Dataset, Vec<Dataset>)> {
    match mode {
        NormalizationMode::None => Ok((train.clone(), others.iter().map(|d| (*d).clone()).collect())),
        NormalizationMode::MinMax => {
            let norm = Normalization {
                features: MinMax::fit(train.features.matrix()),
                targets: MinMax::fit(train.targets.matrix()),
            };
            let rest = others.iter().map(|d| d.normalized_with(&norm)).collect::<Result<Vec<_>>>()?;
            Ok((train.normalized_with(&norm)?, rest))
        }
    }
}

/// Loss value and its two logged components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    /// Conditional CS divergence.
    pub prediction: f64,
    /// Normalized CS-QMI; absent when β = 0 because the term is skipped.
    pub compression: Option<f64>,
    pub total: f64,
}

fn combine(prediction: f64, compression: Option<f64>, beta: f64) -> LossParts {
    LossParts {
        prediction,
        compression,
        total: compression.map_or(prediction, |c| prediction + c * beta),
    }
}

/// Loss value from the plain estimators, without a tape.
pub fn cs_ib_loss(batch: &PredictionBatch, t: &SampleMatrix, cfg: &TrainConfig) -> Result<LossParts> {
    cfg.validate()?;
    if t.rows() != batch.len() {
        return Err(dim_err(format!("{} rows of t for a batch of {}", t.rows(), batch.len())));
    }
    let (sx, sy, st) = cfg.kernels()?;
    let prediction = match conditional_cs(batch, sx, sy)? {
        DivergenceValue::Finite(v) => v,
        DivergenceValue::Infinite => return Err(infinite_prediction()),
    };
    let compression = if cfg.beta > 0.0 {
        Some(normalized_cs_qmi(batch.x(), t, sx, st)?.nats())
    } else {
        None
    };
    Ok(combine(prediction, compression, cfg.beta))
}

fn infinite_prediction() -> Error {
    Error::Numerical("prediction term (conditional CS) is infinite: no ŷ lies within kernel range of any y".into())
}

/// Tape handles of a recorded loss.
#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    pub total: Var,
    pub prediction: Var,
    pub compression: Option<Var>,
}

impl LossNodes {
    pub fn parts(&self, tape: &Tape) -> LossParts {
        LossParts {
            prediction: tape.value(self.prediction).item(),
            compression: self.compression.map(|c| tape.value(c).item()),
            total: tape.value(self.total).item(),
        }
    }
}

/// Records the loss for constant `x`, `y` and tape nodes `ŷ`, `t`.
pub fn record_cs_ib_loss(
    tape: &mut Tape,
    x: &Matrix,
    y: &Matrix,
    y_hat: Var,
    t: Var,
    cfg: &TrainConfig,
) -> Result<LossNodes> {
    cfg.validate()?;
    let n = x.rows();
    if n < 2 || y.rows() != n || tape.value(y_hat).rows() != n || tape.value(t).rows() != n {
        return Err(dim_err("x, y, ŷ and t must share at least two rows"));
    }
    let (sx, sy, st) = cfg.kernels()?;
    let k = sqdist_raw(x, x)?.map(|d| (d * sx.neg_half_inv_var()).exp());
    let prediction = record_conditional_cs(tape, &k, y, y_hat, sy)?;
    let compression = if cfg.beta > 0.0 {
        Some(record_normalized_cs_qmi(tape, &k, t, st)?)
    } else {
        None
    };
    let total = match compression {
        Some(c) => {
            let weighted = tape.scale(c, cfg.beta);
            tape.add(prediction, weighted)?
        }
        None => prediction,
    };
    Ok(LossNodes {
        total,
        prediction,
        compression,
    })
}

/// `ln Σⱼ (Σᵢ Kⱼᵢ Lⱼᵢ) / (Σᵢ Kⱼᵢ)²` for the three L matrices, with the
/// y-only term folded in as a constant.
fn record_conditional_cs(tape: &mut Tape, k: &Matrix, y: &Matrix, y_hat: Var, sy: KernelSpec) -> Result<Var> {
    let cy = sy.neg_half_inv_var();
    let w = k.row_sums().map(|r| 1.0 / (r * r));
    let l1 = sqdist_raw(y, y)?.map(|d| (d * cy).exp());
    let t1 = k
        .row_iter()
        .zip(l1.row_iter())
        .zip(w.as_slice())
        .map(|((kr, lr), wj)| wj * kr.iter().zip(lr).map(|(a, b)| a * b).sum::<f64>())
        .sum::<f64>()
        .ln();
    let kv = tape.constant(k.clone());
    let wv = tape.constant(w);
    let yv = tape.constant(y.clone());
    let weighted_sum = |tape: &mut Tape, a: Var, b: Var| -> Result<Var> {
        let d = tape.pairwise_sqdist(a, b)?;
        let e = tape.scale(d, cy);
        let l = tape.exp(e);
        let kl = tape.mul(kv, l)?;
        let r = tape.sum_rows(kl);
        let r = tape.mul(r, wv)?;
        Ok(tape.sum(r))
    };
    let s2 = weighted_sum(tape, y_hat, y_hat)?;
    // entry (j, i) is κ(ŷⱼ, yᵢ)
    let s21 = weighted_sum(tape, y_hat, yv)?;
    let t2 = tape.log(s2);
    let t21 = tape.log(s21);
    if !(tape.value(t21).item() >= LOG_UNDERFLOW) {
        return Err(infinite_prediction());
    }
    let cross = tape.scale(t21, -2.0);
    let pred = tape.add(t2, cross)?;
    Ok(tape.add_scalar(pred, t1))
}

/// `I(x;t) / √(I(x;x) I(t;t))` with constant K. The `N` factors of the
/// three log-means cancel and are omitted.
fn record_normalized_cs_qmi(tape: &mut Tape, k: &Matrix, t: Var, st: KernelSpec) -> Result<Var> {
    let ixx = cs_qmi_from_grams(k, k);
    check_self_dependence("x", ixx)?;
    let rk = k.row_sums();
    let ln_sk = rk.sum().ln();
    let kv = tape.constant(k.clone());
    let rkv = tape.constant(rk);
    let d = tape.pairwise_sqdist(t, t)?;
    let e = tape.scale(d, st.neg_half_inv_var());
    let q = tape.exp(e);
    let rq = tape.sum_rows(q);
    let sq = tape.sum(q);
    let ln_sq = tape.log(sq);

    let kq = tape.mul(kv, q)?;
    let joint = tape.sum(kq);
    let ln_joint = tape.log(joint);
    let cross = tape.mul(rkv, rq)?;
    let cross = tape.sum(cross);
    let ln_cross = tape.log(cross);
    let ixt = tape.add(ln_joint, ln_sq)?;
    let m = tape.scale(ln_cross, -2.0);
    let ixt = tape.add(ixt, m)?;
    let ixt = tape.add_scalar(ixt, ln_sk);

    let q2 = tape.square(q);
    let qq = tape.sum(q2);
    let ln_qq = tape.log(qq);
    let rq2 = tape.square(rq);
    let rq2 = tape.sum(rq2);
    let ln_rq2 = tape.log(rq2);
    let a = tape.scale(ln_sq, 2.0);
    let b = tape.scale(ln_rq2, -2.0);
    let itt = tape.add(ln_qq, a)?;
    let itt = tape.add(itt, b)?;
    check_self_dependence("t", tape.value(itt).item())?;

    let root = tape.sqrt(itt);
    let denom = tape.scale(root, ixx.sqrt());
    tape.div(ixt, denom)
}

/// One epoch's summary. Loss terms and `i_xt` are batch means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
    pub prediction: f64,
    /// Normalized CS-QMI between batch x and t; absent if any batch was
    /// degenerate.
    pub i_xt: Option<f64>,
    pub rmse_train: f64,
    pub rmse_test: Option<f64>,
    /// `N⁻² Σ K∘Q`, the squared norm of the joint embedding.
    pub joint_embedding_sq: f64,
    /// `N⁻⁴ ΣK ΣQ`, the squared norm of the product-of-marginals embedding.
    pub product_embedding_sq: f64,
    pub noise_std_mean: f64,
}

/// Everything needed to continue a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub model: ModelGraph,
    pub optimizer: OptimizerState,
    pub log: Vec<EpochRecord>,
}

impl TrainState {
    pub fn new(model: ModelGraph, cfg: &TrainConfig) -> Result<Self> {
        model.validate()?;
        Ok(Self {
            model,
            optimizer: OptimizerState::new(cfg.optimizer, cfg.lr)?,
            log: Vec::new(),
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.log.len()
    }
}

/// A run that stopped on a numerical failure. `last_good` is the state after
/// the last completed epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainFailure {
    pub error: Error,
    pub epoch: usize,
    pub last_good: TrainState,
}

impl core::fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "training failed in epoch {}: {}", self.epoch, self.error)
    }
}

impl core::error::Error for TrainFailure {}

pub fn rmse(y: &SampleMatrix, y_hat: &Matrix) -> Result<f64> {
    Ok(mse(y, &SampleMatrix::new(y_hat.clone())?)?.sqrt())
}

/// RMSE on `test` of always predicting the mean target of `train`.
pub fn baseline_rmse(train: &SampleMatrix, test: &SampleMatrix) -> Result<f64> {
    let mean = train.matrix().col_sums().map(|v| v / train.rows() as f64);
    let pred = Matrix::from_fn(test.rows(), test.cols(), |_, j| mean[(0, j)]);
    rmse(test, &pred)
}

/// Trains `model` from scratch for `cfg.epochs` epochs.
pub fn train(
    model: ModelGraph,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    cfg: &TrainConfig,
) -> core::result::Result<TrainState, TrainFailure> {
    let state = TrainState::new(model.clone(), cfg).map_err(|error| TrainFailure {
        error,
        epoch: 0,
        last_good: TrainState {
            model,
            optimizer: OptimizerState::sgd(0.0).expect("zero rate is valid"),
            log: Vec::new(),
        },
    })?;
    resume(state, train_set, test_set, cfg, &mut |_| Ok(()))
}

/// Continues `state` until `cfg.epochs` epochs are logged. `on_epoch` runs
/// after every completed epoch, for checkpointing; its error aborts the run.
///
/// Each epoch shuffles with a seed derived from `(seed, epoch)` and each
/// batch draws noise from `(seed, epoch, batch)`, so a resumed run
/// reproduces an uninterrupted one. A trailing batch of one row is dropped.
pub fn resume(
    mut state: TrainState,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&TrainState) -> Result<()>,
) -> core::result::Result<TrainState, TrainFailure> {
    let fail = |error: Error, epoch: usize, s: &TrainState| TrainFailure {
        error,
        epoch,
        last_good: s.clone(),
    };
    let start = state.epochs_done();
    if let Err(e) = check_inputs(&state.model, train_set, test_set, cfg) {
        return Err(fail(e, start, &state));
    }
    for epoch in start + 1..=cfg.epochs {
        let before = state.clone();
        match run_epoch(&mut state, epoch, train_set, test_set, cfg) {
            Ok(record) => state.log.push(record),
            Err(e) => return Err(fail(e, epoch, &before)),
        }
        if let Err(e) = on_epoch(&state) {
            return Err(fail(e, epoch, &state));
        }
    }
    Ok(state)
}

fn check_inputs(model: &ModelGraph, train_set: &Dataset, test_set: Option<&Dataset>, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    model.validate()?;
    for d in core::iter::once(train_set).chain(test_set) {
        if d.features.cols() != model.input_dim() || d.targets.cols() != model.output_dim() {
            return Err(dim_err(format!(
                "data is {}→{}, model is {}→{}",
                d.features.cols(),
                d.targets.cols(),
                model.input_dim(),
                model.output_dim()
            )));
        }
    }
    if train_set.len() < 2 {
        return Err(dim_err("training needs at least two rows"));
    }
    Ok(())
}

fn batches(n: usize, size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let perm = Rng::new(derive_seed(seed, &[stream::SHUFFLE, epoch as u64]), stream::SHUFFLE).permutation(n);
    perm.chunks(size).filter(|c| c.len() >= 2).map(<[usize]>::to_vec).collect()
}

fn run_epoch(
    state: &mut TrainState,
    epoch: usize,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<EpochRecord> {
    let (sx, _, st) = cfg.kernels()?;
    let plan = batches(train_set.len(), cfg.batch_size, cfg.seed, epoch);
    let nb = plan.len() as f64;
    let (mut loss, mut pred, mut joint_sq, mut product_sq) = (0.0, 0.0, 0.0, 0.0);
    let mut i_xt = Some(0.0);
    for (b, idx) in plan.iter().enumerate() {
        let part = train_set.select(idx);
        let x = part.features.matrix();
        let noise = Noise::Seeded(derive_seed(cfg.seed, &[epoch as u64, b as u64]));
        let mut fwd = state.model.forward(x, noise, false)?;
        let nodes = record_cs_ib_loss(&mut fwd.tape, x, part.targets.matrix(), fwd.y_hat, fwd.t, cfg)?;
        let parts = nodes.parts(&fwd.tape);
        if !parts.total.is_finite() {
            return Err(Error::Numerical(format!("loss is {} in epoch {epoch}, batch {b}", parts.total)));
        }
        let t = SampleMatrix::new(fwd.tape.value(fwd.t).clone())?;
        let diag = batch_diagnostics(&part.features, &t, sx, st)?;
        loss += parts.total / nb;
        pred += parts.prediction / nb;
        joint_sq += diag.joint_sq / nb;
        product_sq += diag.product_sq / nb;
        i_xt = match (i_xt, parts.compression.or(diag.normalized)) {
            (Some(acc), Some(v)) => Some(acc + v / nb),
            _ => None,
        };
        let grads = fwd.tape.backward(nodes.total)?;
        let params = state.model.params();
        let g: Vec<Matrix> = fwd
            .params
            .iter()
            .zip(&params)
            .map(|(v, p)| grads.get_or_zeros(*v, p))
            .collect();
        state.optimizer.step(&mut state.model, &g)?;
    }
    let rmse_train = rmse(&train_set.targets, &state.model.predict(train_set.features.matrix())?)?;
    let rmse_test = test_set
        .map(|d| rmse(&d.targets, &state.model.predict(d.features.matrix())?))
        .transpose()?;
    if !rmse_train.is_finite() || rmse_test.is_some_and(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("predictions diverged in epoch {epoch}")));
    }
    let s = state.model.noise_std.as_slice();
    Ok(EpochRecord {
        epoch,
        loss,
        prediction: pred,
        i_xt,
        rmse_train,
        rmse_test,
        joint_embedding_sq: joint_sq,
        product_embedding_sq: product_sq,
        noise_std_mean: s.iter().sum::<f64>() / s.len() as f64,
    })
}

struct BatchDiagnostics {
    normalized: Option<f64>,
    joint_sq: f64,
    product_sq: f64,
}

fn batch_diagnostics(x: &SampleMatrix, t: &SampleMatrix, sx: KernelSpec, st: KernelSpec) -> Result<BatchDiagnostics> {
    let k = gram(x, x, sx)?.into_entries();
    let q = gram(t, t, st)?.into_entries();
    let n = x.rows() as f64;
    let kq: f64 = k.as_slice().iter().zip(q.as_slice()).map(|(a, b)| a * b).sum();
    let ixx = cs_qmi_from_grams(&k, &k);
    let itt = cs_qmi_from_grams(&q, &q);
    let normalized = (check_self_dependence("x", ixx).is_ok() && check_self_dependence("t", itt).is_ok())
        .then(|| cs_qmi_from_grams(&k, &q) / (ixx * itt).sqrt());
    Ok(BatchDiagnostics {
        normalized,
        joint_sq: kq / (n * n),
        product_sq: k.sum() * q.sum() / (n * n * n * n),
    })
}

/// `½ ln(var(y) / mse(y, ŷ))` with `var(y) = N⁻¹ Σ‖yᵢ - ȳ‖²`; infinite
/// when the fit is exact.
pub fn iyt_proxy(y: &SampleMatrix, y_hat: &SampleMatrix) -> Result<DivergenceValue> {
    let err = mse(y, y_hat)?;
    let n = y.rows() as f64;
    let mean = y.matrix().col_sums().map(|v| v / n);
    let var = y
        .matrix()
        .row_iter()
        .map(|r| r.iter().zip(mean.as_slice()).map(|(a, m)| (a - m) * (a - m)).sum::<f64>())
        .sum::<f64>()
        / n;
    if !(var > 0.0) {
        return Err(Error::DegenerateInput("targets have zero variance".into()));
    }
    if err == 0.0 {
        return Ok(DivergenceValue::Infinite);
    }
    Ok(DivergenceValue::Finite(0.5 * (var / err).ln()))
}

/// `1 - I(x;t)|β / I(x;t)|β=0`, unclamped.
pub fn compression_ratio(i_xt_at_beta: f64, i_xt_at_zero: f64) -> Result<f64> {
    if !(i_xt_at_zero > 0.0) {
        return Err(Error::DegenerateInput(format!(
            "reference I(x;t) must be positive, got {i_xt_at_zero}"
        )));
    }
    Ok(1.0 - i_xt_at_beta / i_xt_at_zero)
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = alloc::vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(dim_err("spearman needs two equal-length sequences of at least two values"));
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::DegenerateInput("a sequence is constant".into()));
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Final-model measurements on the training set and, if given, the test set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Mean normalized CS-QMI between x and t over fixed training batches.
    pub i_xt: f64,
    /// Mean raw CS-QMI over the same batches.
    pub i_xt_raw: f64,
    /// Infinite when the training fit is exact.
    pub i_yt_proxy: f64,
    pub rmse_train: f64,
    pub rmse_test: Option<f64>,
}

/// Tag mixed into the seeds used by [`evaluate`].
const EVAL_TAG: u64 = 0xE7A1;

/// Predictions use the noise mean. `I(x;t)` is estimated at the training
/// batch size, because the normalized estimator's level depends on N and
/// the loss only ever sees batches: one seeded noise draw, one seeded
/// partition into `batch_size` chunks, batch values averaged.
pub fn evaluate(model: &ModelGraph, train_set: &Dataset, test_set: Option<&Dataset>, cfg: &TrainConfig) -> Result<Evaluation> {
    let (sx, _, st) = cfg.kernels()?;
    let x = &train_set.features;
    let noise = Noise::Seeded(derive_seed(cfg.seed, &[EVAL_TAG]));
    let t = SampleMatrix::new(model.encode(x.matrix(), noise)?)?;
    let chunks = batches(x.rows(), cfg.batch_size, cfg.seed, EVAL_TAG as usize);
    if chunks.is_empty() {
        return Err(dim_err("evaluation needs at least two training rows"));
    }
    let (mut norm, mut raw) = (0.0, 0.0);
    for idx in &chunks {
        let parts = cs_qmi_parts(&x.select_rows(idx), &t.select_rows(idx), sx, st)?;
        norm += parts.normalized()?;
        raw += parts.raw;
    }
    let nb = chunks.len() as f64;
    let pred = SampleMatrix::new(model.predict(x.matrix())?)?;
    let proxy = iyt_proxy(&train_set.targets, &pred)?;
    Ok(Evaluation {
        i_xt: norm / nb,
        i_xt_raw: raw / nb,
        i_yt_proxy: proxy.nats(),
        rmse_train: mse(&train_set.targets, &pred)?.sqrt(),
        rmse_test: test_set
            .map(|d| rmse(&d.targets, &model.predict(d.features.matrix())?))
            .transpose()?,
    })
}

/// One row of the information plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoPlanePoint {
    pub beta: f64,
    pub i_xt: f64,
    pub i_xt_raw: f64,
    pub i_yt_proxy: f64,
    /// Absent when the β = 0 reference failed.
    pub r: Option<f64>,
    pub rmse_train: f64,
    pub rmse_test: Option<f64>,
    pub epochs: usize,
    pub seed: u64,
}

/// A trained sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointRun {
    pub beta: f64,
    pub state: TrainState,
    pub eval: Evaluation,
}

/// Trains and evaluates one β from the template's seeded initialization.
pub fn run_point(
    spec: &ModelSpec,
    beta: f64,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<PointRun> {
    let cfg = TrainConfig { beta, ..cfg.clone() };
    let model = ModelGraph::new(spec, cfg.seed)?;
    let state = train(model, train_set, test_set, &cfg).map_err(|f| f.error)?;
    let eval = evaluate(&state.model, train_set, test_set, &cfg)?;
    Ok(PointRun { beta, state, eval })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub beta: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub points: Vec<InfoPlanePoint>,
    pub failures: Vec<SweepFailure>,
    /// The β = 0 reference, when it trained.
    pub reference: Option<Evaluation>,
    pub runs: Vec<PointRun>,
}

/// Runs the grid through `runner`, which must return one result per β in
/// order. A β = 0 reference is appended when the grid lacks one and is not
/// emitted as a point.
pub fn sweep_with(
    betas: &[f64],
    cfg: &TrainConfig,
    runner: &dyn Fn(&[f64]) -> Vec<Result<PointRun>>,
) -> Result<SweepOutcome> {
    if betas.is_empty() {
        return Err(Error::Config("beta grid is empty".into()));
    }
    for &b in betas {
        TrainConfig { beta: b, ..cfg.clone() }.validate()?;
    }
    let has_zero = betas.contains(&0.0);
    let mut all = betas.to_vec();
    if !has_zero {
        all.push(0.0);
    }
    let mut results = runner(&all);
    if results.len() != all.len() {
        return Err(Error::Contract(format!("runner returned {} results for {} points", results.len(), all.len())));
    }
    let reference = if has_zero {
        let pos = betas.iter().position(|&b| b == 0.0).expect("grid contains zero");
        results[pos].as_ref().ok().map(|r| r.eval)
    } else {
        results.pop().expect("reference appended").ok().map(|r| r.eval)
    };
    let mut out = SweepOutcome {
        points: Vec::new(),
        failures: Vec::new(),
        reference,
        runs: Vec::new(),
    };
    if !has_zero && reference.is_none() {
        out.failures.push(SweepFailure {
            beta: 0.0,
            message: "reference run failed; r is unavailable".into(),
        });
    }
    for (beta, res) in betas.iter().zip(results) {
        match res {
            Ok(run) => {
                let e = run.eval;
                out.points.push(InfoPlanePoint {
                    beta: *beta,
                    i_xt: e.i_xt,
                    i_xt_raw: e.i_xt_raw,
                    i_yt_proxy: e.i_yt_proxy,
                    r: reference.and_then(|r0| compression_ratio(e.i_xt, r0.i_xt).ok()),
                    rmse_train: e.rmse_train,
                    rmse_test: e.rmse_test,
                    epochs: run.state.epochs_done(),
                    seed: cfg.seed,
                });
                out.runs.push(run);
            }
            Err(e) => out.failures.push(SweepFailure {
                beta: *beta,
                message: format!("{e}"),
            }),
        }
    }
    Ok(out)
}

/// Sequential sweep.
pub fn sweep(
    spec: &ModelSpec,
    betas: &[f64],
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<SweepOutcome> {
    sweep_with(betas, cfg, &|bs| {
        bs.iter().map(|&b| run_point(spec, b, train_set, test_set, cfg)).collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic;
    use alloc::vec;

    fn small_spec(input: usize) -> ModelSpec {
        ModelSpec {
            input_dim: input,
            encoder: vec![6, 4],
            decoder: vec![5],
            output_dim: 1,
            noise_init: 0.1,
            learn_noise: true,
        }
    }

    fn small_data(n: usize, seed: u64) -> Dataset {
        let raw = gen_synthetic(n, 3, seed).unwrap();
        prepare(&raw, &[], NormalizationMode::MinMax).unwrap().0
    }

    fn cfg(beta: f64) -> TrainConfig {
        TrainConfig {
            beta,
            epochs: 3,
            batch_size: 8,
            lr: 1e-2,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    fn tape_loss(model: &ModelGraph, d: &Dataset, c: &TrainConfig, noise: &Matrix) -> (LossParts, PredictionBatch, SampleMatrix) {
        let x = d.features.matrix();
        let mut f = model.forward(x, Noise::Draws(noise), false).unwrap();
        let nodes = record_cs_ib_loss(&mut f.tape, x, d.targets.matrix(), f.y_hat, f.t, c).unwrap();
        let y_hat = SampleMatrix::new(f.tape.value(f.y_hat).clone()).unwrap();
        let t = SampleMatrix::new(f.tape.value(f.t).clone()).unwrap();
        let batch = PredictionBatch::new(d.features.clone(), d.targets.clone(), y_hat).unwrap();
        (nodes.parts(&f.tape), batch, t)
    }

    #[test]
    fn tape_and_plain_losses_agree() {
        let d = small_data(24, 1);
        let model = ModelGraph::new(&small_spec(3), 2).unwrap();
        let noise = Rng::new(3, stream::NOISE).normal_matrix(24, 4);
        for beta in [0.0, 0.01, 1.0, 7.5] {
            let c = cfg(beta);
            let (tape, batch, t) = tape_loss(&model, &d, &c, &noise);
            let plain = cs_ib_loss(&batch, &t, &c).unwrap();
            assert!((tape.prediction - plain.prediction).abs() < 1e-12, "{tape:?} {plain:?}");
            assert_eq!(tape.compression.is_some(), beta > 0.0);
            if let (Some(a), Some(b)) = (tape.compression, plain.compression) {
                // the two paths sum the Gram entries in different orders
                assert!((a - b).abs() < 1e-10 * b.abs(), "{a} {b}");
            }
            if beta <= 0.01 {
                assert!((tape.total - plain.total).abs() < 1e-12, "{beta} {tape:?} {plain:?}");
            }
        }
    }

    #[test]
    fn beta_zero_is_conditional_cs_and_parts_sum() {
        let d = small_data(16, 4);
        let model = ModelGraph::new(&small_spec(3), 9).unwrap();
        let noise = Rng::new(1, stream::NOISE).normal_matrix(16, 4);
        let (p0, batch, _) = tape_loss(&model, &d, &cfg(0.0), &noise);
        let (sx, sy, _) = cfg(0.0).kernels().unwrap();
        assert_eq!(p0.total, p0.prediction);
        assert!((p0.total - conditional_cs(&batch, sx, sy).unwrap().nats()).abs() < 1e-12);
        let (p, _, _) = tape_loss(&model, &d, &cfg(0.01), &noise);
        // the logged components reproduce the loss exactly
        assert_eq!(p.total, p.prediction + p.compression.unwrap() * 0.01);
    }

    #[test]
    fn constant_t_is_degenerate() {
        let d = small_data(10, 2);
        let mut model = ModelGraph::new(&small_spec(3), 1).unwrap();
        for l in &mut model.encoder {
            l.weight = Matrix::zeros(l.weight.rows(), l.weight.cols());
        }
        let (_, batch, t) = tape_loss(&model, &d, &cfg(0.0), &Matrix::zeros(10, 4));
        assert!(matches!(cs_ib_loss(&batch, &t, &cfg(1.0)), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn zero_rate_leaves_parameters() {
        let d = small_data(30, 3);
        let model = ModelGraph::new(&small_spec(3), 4).unwrap();
        let c = TrainConfig { lr: 0.0, beta: 0.1, ..cfg(0.1) };
        let s = train(model.clone(), &d, None, &c).unwrap();
        assert_eq!(s.model, model);
        assert_eq!(s.log.len(), 3);
    }

    #[test]
    fn fixed_seed_runs_are_identical_and_resumable() {
        let d = small_data(40, 6);
        let t = small_data(12, 7);
        let spec = small_spec(3);
        let c = cfg(0.05);
        let a = train(ModelGraph::new(&spec, 1).unwrap(), &d, Some(&t), &c).unwrap();
        let b = train(ModelGraph::new(&spec, 1).unwrap(), &d, Some(&t), &c).unwrap();
        assert_eq!(a, b);
        let short = TrainConfig { epochs: 1, ..c.clone() };
        let half = train(ModelGraph::new(&spec, 1).unwrap(), &d, Some(&t), &short).unwrap();
        let resumed = resume(half, &d, Some(&t), &c, &mut |_| Ok(())).unwrap();
        assert_eq!(resumed, a);
    }

    #[test]
    fn failure_keeps_last_good_state() {
        let d = small_data(20, 8);
        let model = ModelGraph::new(&small_spec(3), 4).unwrap();
        let mut calls = 0;
        let r = resume(TrainState::new(model, &cfg(0.0)).unwrap(), &d, None, &cfg(0.0), &mut |_| {
            calls += 1;
            if calls == 2 {
                Err(Error::Numerical("injected".into()))
            } else {
                Ok(())
            }
        });
        let f = r.unwrap_err();
        assert_eq!(f.epoch, 2);
        assert_eq!(f.last_good.log.len(), 2);
        // an exploding rate ends in a numerical failure, not a panic
        let wild = TrainConfig { lr: 1e12, optimizer: OptimizerKind::Sgd, epochs: 20, ..cfg(0.0) };
        let model = ModelGraph::new(&small_spec(3), 4).unwrap();
        if let Err(f) = train(model, &d, None, &wild) {
            assert!(f.last_good.log.iter().all(|e| e.loss.is_finite()));
        }
    }

    #[test]
    fn proxy_values() {
        let y = SampleMatrix::column(&[0.0, 2.0]).unwrap();
        // var(y) = 1
        let same = SampleMatrix::column(&[1.0, 1.0]).unwrap();
        assert!(iyt_proxy(&y, &same).unwrap().nats().abs() < 1e-15);
        let quarter = SampleMatrix::column(&[0.5, 1.5]).unwrap();
        assert!((iyt_proxy(&y, &quarter).unwrap().nats() - core::f64::consts::LN_2).abs() < 1e-12);
        assert!(iyt_proxy(&y, &y).unwrap().is_infinite());
        assert!(iyt_proxy(&same, &y).is_err());
    }

    #[test]
    fn ratio_values() {
        assert_eq!(compression_ratio(0.4, 0.4).unwrap(), 0.0);
        assert_eq!(compression_ratio(0.2, 0.4).unwrap(), 0.5);
        assert!(compression_ratio(0.6, 0.4).unwrap() < 0.0);
        assert!(compression_ratio(0.1, 0.0).is_err());
    }

    #[test]
    fn spearman_values() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 5.0, 9.0]).unwrap(), 1.0);
        // ties take the average rank: ranks (1, 2.5, 2.5) against (1, 2, 3)
        let r = spearman(&[0.0, 1.0, 1.0], &[0.0, 1.0, 2.0]).unwrap();
        assert!((r - 0.866_025_403_784_438_6).abs() < 1e-12);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn sweep_reference_and_duplicates() {
        let d = small_data(24, 9);
        let spec = small_spec(3);
        let c = TrainConfig { epochs: 2, ..cfg(0.0) };
        let only_zero = sweep(&spec, &[0.0], &d, None, &c).unwrap();
        assert_eq!(only_zero.points.len(), 1);
        assert_eq!(only_zero.points[0].r, Some(0.0));
        let dup = sweep(&spec, &[0.5, 0.5], &d, None, &c).unwrap();
        assert_eq!(dup.points.len(), 2);
        assert_eq!(dup.points[0], dup.points[1]);
        assert!(dup.reference.is_some());
    }

    #[test]
    fn sweep_records_failures_and_continues() {
        let d = small_data(12, 10);
        let c = TrainConfig { epochs: 1, ..cfg(0.0) };
        let out = sweep_with(&[0.0, 1.0], &c, &|bs| {
            bs.iter()
                .map(|&b| {
                    if b == 1.0 {
                        Err(Error::Numerical("boom".into()))
                    } else {
                        run_point(&small_spec(3), b, &d, None, &c)
                    }
                })
                .collect()
        })
        .unwrap();
        assert_eq!(out.points.len(), 1);
        assert_eq!(out.failures, vec![SweepFailure { beta: 1.0, message: "numerical failure: boom".into() }]);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { batch_size: 1, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { beta: -1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { sigma_t: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn baseline_is_mean_predictor() {
        let tr = SampleMatrix::column(&[0.0, 2.0]).unwrap();
        let te = SampleMatrix::column(&[1.0, 3.0]).unwrap();
        assert!((baseline_rmse(&tr, &te).unwrap() - 2.0f64.sqrt()).abs() < 1e-15);
    }
}
