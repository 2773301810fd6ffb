//! Cross-validated training and the experiment batteries built on it.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::corpus::{Corpus, Label};
use crate::earlysib::{prepare_inputs, EarlySibModel, ModelConfig, Prepared};
use crate::error::{Error, Result};
use crate::metrics::{BinaryMetrics, Confusion, MeanSd};
use crate::nn::{AdamW, AdamWConfig, Gradients, Graph, ParamStore, Var};
use crate::rng;
use crate::userset::{resample_indices, select_context, UserRecord};

pub use crate::stats::{mcnemar, McNemar};

/// One point of the hyperparameter grid.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HyperParams {
    pub lr: f64,
    pub grad_accum: usize,
    pub weight_decay: f64,
    /// Target share of class 1 in the resampled training split.
    pub resample: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self { lr: 1e-3, grad_accum: 1, weight_decay: 0.1, resample: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    pub lr_grid: Vec<f64>,
    pub grad_accum_grid: Vec<usize>,
    pub weight_decay_grid: Vec<f64>,
    pub resample_grid: Vec<f64>,
    /// Used when no grid search is run.
    pub hyper: HyperParams,
    pub patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub k_folds: usize,
    /// Share of each training split held out for early stopping.
    pub val_fraction: f64,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_grid: alloc::vec![0.1, 1e-3, 2e-5],
            grad_accum_grid: alloc::vec![1, 2, 4, 8],
            weight_decay_grid: alloc::vec![0.0, 0.1],
            resample_grid: alloc::vec![0.04, 0.3, 0.5],
            hyper: HyperParams::default(),
            patience: 3,
            max_epochs: 10,
            batch_size: 8,
            k_folds: 5,
            val_fraction: 0.1,
            clip_norm: 1.0,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.lr_grid.is_empty()
            || self.grad_accum_grid.is_empty()
            || self.weight_decay_grid.is_empty()
            || self.resample_grid.is_empty()
        {
            return bad("hyperparameter grids must be nonempty");
        }
        if self.max_epochs == 0 || self.batch_size == 0 || self.k_folds < 2 {
            return bad("max_epochs and batch_size must be positive and k_folds at least 2");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must lie in (0, 1)");
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<HyperParams> {
        let mut out = Vec::new();
        for &lr in &self.lr_grid {
            for &grad_accum in &self.grad_accum_grid {
                for &weight_decay in &self.weight_decay_grid {
                    for &resample in &self.resample_grid {
                        out.push(HyperParams { lr, grad_accum, weight_decay, resample });
                    }
                }
            }
        }
        out
    }
}

/// Outcome of feeding one validation score to [`EarlyStopping`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops after `patience` consecutive epochs without strict improvement.
/// An equal score counts as an improvement only when a secondary loss was
/// supplied and decreased.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    best_loss: f64,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: None, best_loss: f64::INFINITY, stale: 0 }
    }

    pub fn observe(&mut self, epoch: usize, score: f64) -> StopDecision {
        self.observe_with_loss(epoch, score, f64::INFINITY)
    }

    pub fn observe_with_loss(&mut self, epoch: usize, score: f64, loss: f64) -> StopDecision {
        match self.best {
            Some((_, b)) if score < b || (score == b && !(loss < self.best_loss)) => {
                self.stale += 1;
                if self.stale >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Continue
                }
            }
            _ => {
                self.best = Some((epoch, score));
                self.best_loss = loss;
                self.stale = 0;
                StopDecision::Improved
            }
        }
    }

    /// `(epoch, score)` of the best observation so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

/// `k` disjoint test splits covering `0..labels.len()`. Each class is
/// shuffled and dealt round-robin; dealing continues across classes so fold
/// sizes differ by at most one.
pub fn stratified_kfold(labels: &[Label], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidConfig("k must be at least 2".into()));
    }
    let mut r = rng::seeded(seed);
    let mut folds = alloc::vec![Vec::new(); k];
    let mut next = 0;
    for class in [Label::NoSib, Label::Sib] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::ClassTooSmall { class: class.bit(), have: members.len(), need: k });
        }
        rng::shuffle(&mut r, &mut members);
        for m in members {
            folds[next % k].push(m);
            next += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// Splits `indices` into `(rest, held_out)` with `fraction` of every class
/// (rounded, at least one when the class has two or more) held out.
pub fn stratified_split(indices: &[usize], labels: &[Label], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut r = rng::seeded(seed);
    let (mut rest, mut held) = (Vec::new(), Vec::new());
    for class in [Label::NoSib, Label::Sib] {
        let mut members: Vec<usize> = indices.iter().copied().filter(|&i| labels[i] == class).collect();
        rng::shuffle(&mut r, &mut members);
        let mut n = libm::round(members.len() as f64 * fraction) as usize;
        if n == 0 && members.len() >= 2 {
            n = 1;
        }
        held.extend_from_slice(&members[..n]);
        rest.extend_from_slice(&members[n..]);
    }
    rest.sort_unstable();
    held.sort_unstable();
    (rest, held)
}

/// Optimiser settings for [`train_epoch`].
#[derive(Debug, Clone, Copy)]
pub(crate) struct StepSettings {
    pub batch_size: usize,
    pub grad_accum: usize,
    pub clip_norm: f64,
    pub dropout: f64,
    pub seed: u64,
}

/// One pass over `order`. Gradients are averaged over `batch_size *
/// grad_accum` examples, clipped to `clip_norm` in global norm, then applied.
/// Returns the mean loss.
pub(crate) fn train_epoch<F>(
    params: &mut ParamStore,
    opt: &mut AdamW,
    order: &[usize],
    epoch: usize,
    s: StepSettings,
    loss_of: F,
) -> Result<f64>
where
    F: Fn(&mut Graph, usize) -> Var,
{
    let mut grads = Gradients::zeros_like(params);
    let per_step = s.batch_size * s.grad_accum.max(1);
    let (mut total, mut pending, mut step) = (0.0, 0usize, 0usize);
    for (pos, &i) in order.iter().enumerate() {
        {
            let salt = ((epoch as u64) << 32) | pos as u64;
            let mut g = Graph::training(params, s.dropout, rng::mix(s.seed, salt));
            let l = loss_of(&mut g, i);
            let v = g.value(l).data[0];
            if !v.is_finite() {
                return Err(Error::Divergence { epoch, step, loss: v });
            }
            total += v;
            g.backward(l, &mut grads);
        }
        pending += 1;
        if pending == per_step || pos + 1 == order.len() {
            grads.scale(1.0 / pending as f64);
            let norm = grads.global_norm();
            if !norm.is_finite() {
                return Err(Error::Divergence { epoch, step, loss: norm });
            }
            if norm > s.clip_norm {
                grads.scale(s.clip_norm / norm);
            }
            opt.step(params, &grads);
            grads.zero();
            pending = 0;
            step += 1;
        }
    }
    Ok(if order.is_empty() { 0.0 } else { total / order.len() as f64 })
}

/// Tokenised inputs and labels of a user dataset under one model config.
#[derive(Debug, Clone)]
pub struct UserData {
    pub inputs: Vec<Prepared>,
    pub labels: Vec<Label>,
}

impl UserData {
    pub fn build(cfg: &ModelConfig, corpus: &Corpus, records: &[UserRecord]) -> Result<Self> {
        let mut inputs = Vec::with_capacity(records.len());
        for r in records {
            let ctx = select_context(corpus, r, &cfg.context)?;
            inputs.push(prepare_inputs(cfg, corpus, &ctx)?);
        }
        Ok(Self { inputs, labels: records.iter().map(|r| r.label).collect() })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_balanced_accuracy: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainingCurve {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_balanced_accuracy: f64,
    pub stopped_early: bool,
}

pub fn predict(model: &EarlySibModel, inputs: &[Prepared], indices: &[usize]) -> Vec<(u8, f64)> {
    indices
        .iter()
        .map(|&i| {
            let out = model.forward_prepared(&inputs[i]);
            (out.label().bit(), out.probability_sib)
        })
        .collect()
}

/// Balanced accuracy and mean cross-entropy on `indices`.
fn validate_on(model: &EarlySibModel, data: &UserData, indices: &[usize]) -> (f64, f64) {
    let mut c = Confusion::default();
    let mut loss = 0.0;
    for (&i, (p, prob)) in indices.iter().zip(predict(model, &data.inputs, indices)) {
        let sib = data.labels[i] == Label::Sib;
        c.record(p == 1, sib);
        let q = if sib { prob } else { 1.0 - prob };
        loss -= libm::log(q.max(1e-300));
    }
    (c.balanced_accuracy(), loss / indices.len().max(1) as f64)
}

/// Trains on `train`, evaluating balanced accuracy on `val` after every
/// epoch; returns the parameters of the best epoch, rounded to `f32`.
pub fn train_fold(
    cfg: &ModelConfig,
    data: &UserData,
    train: &[usize],
    val: &[usize],
    hyper: &HyperParams,
    tc: &TrainConfig,
) -> Result<(EarlySibModel, TrainingCurve)> {
    train_fold_with(cfg, data, train, val, hyper, tc, |_| {})
}

/// As [`train_fold`], reporting each finished epoch to `on_epoch`.
pub fn train_fold_with(
    cfg: &ModelConfig,
    data: &UserData,
    train: &[usize],
    val: &[usize],
    hyper: &HyperParams,
    tc: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(EarlySibModel, TrainingCurve)> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptyInput("training or validation split"));
    }
    let mut model = EarlySibModel::new(cfg.clone())?;
    let mut opt = AdamW::new(
        model.params(),
        AdamWConfig { lr: hyper.lr, weight_decay: hyper.weight_decay, ..AdamWConfig::default() },
    );
    let settings = StepSettings {
        batch_size: tc.batch_size,
        grad_accum: hyper.grad_accum,
        clip_norm: tc.clip_norm,
        dropout: cfg.dropout,
        seed: rng::mix(cfg.seed, 0xD209),
    };
    let mut stopper = EarlyStopping::new(tc.patience);
    let mut curve = TrainingCurve::default();
    let mut best = model.params().clone();
    for epoch in 1..=tc.max_epochs {
        let mut order = train.to_vec();
        rng::shuffle(&mut rng::substream(cfg.seed, epoch as u64), &mut order);
        let train_loss = {
            let (arch, params) = model.split_mut();
            train_epoch(params, &mut opt, &order, epoch, settings, |g, i| {
                let p = &data.inputs[i];
                let logits = arch.logits(g, p, p.len().max(1));
                g.cross_entropy(logits, data.labels[i].bit() as usize)
            })?
        };
        let (val_ba, val_loss) = validate_on(&model, data, val);
        let rec = EpochRecord { epoch, train_loss, val_balanced_accuracy: val_ba, val_loss };
        on_epoch(&rec);
        curve.epochs.push(rec);
        match stopper.observe_with_loss(epoch, val_ba, val_loss) {
            StopDecision::Improved => best = model.params().clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                curve.stopped_early = true;
                break;
            }
        }
    }
    let (best_epoch, best_val) = stopper.best().unwrap_or((0, 0.0));
    curve.best_epoch = best_epoch;
    curve.best_val_balanced_accuracy = best_val;
    *model.params_mut() = best;
    model.params_mut().round_to_f32();
    Ok((model, curve))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Prediction {
    pub index: usize,
    pub label: u8,
    pub predicted: u8,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FoldReport {
    pub fold: usize,
    pub metrics: BinaryMetrics,
    pub test: Vec<usize>,
    /// Resampled training split actually used for gradient steps.
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub curve: Option<TrainingCurve>,
}

/// Per-fold metrics, their mean and population standard deviation, and the
/// pooled test predictions.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub name: String,
    pub folds: Vec<FoldReport>,
    pub balanced_accuracy: MeanSd,
    pub recall: MeanSd,
    pub precision: Option<MeanSd>,
    pub weighted_f1: MeanSd,
    /// Sorted by item index.
    pub predictions: Vec<Prediction>,
}

impl EvalReport {
    pub fn from_folds(name: impl Into<String>, folds: Vec<FoldReport>, mut predictions: Vec<Prediction>) -> Self {
        predictions.sort_by_key(|p| p.index);
        let each = |f: fn(&BinaryMetrics) -> f64| MeanSd::of(&folds.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>());
        let precision = MeanSd::of_defined(&folds.iter().map(|r| r.metrics.precision).collect::<Vec<_>>());
        Self {
            name: name.into(),
            balanced_accuracy: each(|m| m.balanced_accuracy),
            recall: each(|m| m.recall),
            weighted_f1: each(|m| m.weighted_f1),
            precision,
            folds,
            predictions,
        }
    }

    /// Predicted labels aligned with item index (pooled over folds).
    pub fn predicted_labels(&self) -> Vec<u8> {
        self.predictions.iter().map(|p| p.predicted).collect()
    }

    pub fn true_labels(&self) -> Vec<u8> {
        self.predictions.iter().map(|p| p.label).collect()
    }

    /// Confusion matrix summed over folds.
    pub fn pooled_confusion(&self) -> Confusion {
        self.folds.iter().fold(Confusion::default(), |acc, f| acc.merge(&f.metrics.confusion))
    }
}

/// Trained fold models next to their evaluation.
#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub report: EvalReport,
    pub models: Vec<EarlySibModel>,
}

/// Training/validation split of one fold: a stratified validation share is
/// carved from the non-test items first, then the remainder is resampled.
pub fn fold_split(
    labels: &[Label],
    test: &[usize],
    hyper: &HyperParams,
    tc: &TrainConfig,
    fold: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut in_test = alloc::vec![false; labels.len()];
    test.iter().for_each(|&i| in_test[i] = true);
    let pool: Vec<usize> = (0..labels.len()).filter(|&i| !in_test[i]).collect();
    let (rest, val) = stratified_split(&pool, labels, tc.val_fraction, rng::mix(tc.seed, 0x5A11 + fold as u64));
    let rest_labels: Vec<Label> = rest.iter().map(|&i| labels[i]).collect();
    let keep = resample_indices(&rest_labels, hyper.resample, rng::mix(tc.seed, 0x7E5A + fold as u64))?;
    Ok((keep.into_iter().map(|k| rest[k]).collect(), val))
}

/// Full k-fold evaluation of one configuration on fixed `folds`.
pub fn cross_validate(
    name: &str,
    cfg: &ModelConfig,
    data: &UserData,
    tc: &TrainConfig,
    hyper: &HyperParams,
    folds: &[Vec<usize>],
) -> Result<CvOutcome> {
    cross_validate_with(name, cfg, data, tc, hyper, folds, |_, _| {})
}

/// As [`cross_validate`], reporting `(fold, epoch)` progress.
pub fn cross_validate_with(
    name: &str,
    cfg: &ModelConfig,
    data: &UserData,
    tc: &TrainConfig,
    hyper: &HyperParams,
    folds: &[Vec<usize>],
    mut progress: impl FnMut(usize, &EpochRecord),
) -> Result<CvOutcome> {
    tc.validate()?;
    let mut reports = Vec::with_capacity(folds.len());
    let mut models = Vec::with_capacity(folds.len());
    let mut predictions = Vec::new();
    for (k, test) in folds.iter().enumerate() {
        let (train, val) = fold_split(&data.labels, test, hyper, tc, k)?;
        let fold_cfg = ModelConfig { seed: rng::mix(cfg.seed, k as u64), ..cfg.clone() };
        let (model, curve) = train_fold_with(&fold_cfg, data, &train, &val, hyper, tc, |e| progress(k, e))?;
        let preds = predict(&model, &data.inputs, test);
        let labels: Vec<u8> = test.iter().map(|&i| data.labels[i].bit()).collect();
        let predicted: Vec<u8> = preds.iter().map(|p| p.0).collect();
        let metrics: BinaryMetrics = Confusion::from_predictions(&predicted, &labels)?.into();
        for (&i, (p, prob)) in test.iter().zip(preds) {
            predictions.push(Prediction { index: i, label: data.labels[i].bit(), predicted: p, probability: prob });
        }
        reports.push(FoldReport { fold: k, metrics, test: test.clone(), train, val, curve: Some(curve) });
        models.push(model);
    }
    Ok(CvOutcome { report: EvalReport::from_folds(name, reports, predictions), models })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridPoint {
    pub hyper: HyperParams,
    pub mean_val_balanced_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridSearch {
    pub points: Vec<GridPoint>,
    pub best: HyperParams,
}

/// Scores every grid point by the mean best-epoch validation balanced
/// accuracy over `folds`. Ties go to the smaller learning rate, then to the
/// earlier grid point.
pub fn grid_search(cfg: &ModelConfig, data: &UserData, tc: &TrainConfig, folds: &[Vec<usize>]) -> Result<GridSearch> {
    tc.validate()?;
    let mut points = Vec::new();
    for hyper in tc.grid() {
        let mut scores = Vec::with_capacity(folds.len());
        for (k, test) in folds.iter().enumerate() {
            let (train, val) = fold_split(&data.labels, test, &hyper, tc, k)?;
            let fold_cfg = ModelConfig { seed: rng::mix(cfg.seed, k as u64), ..cfg.clone() };
            let (_, curve) = train_fold(&fold_cfg, data, &train, &val, &hyper, tc)?;
            scores.push(curve.best_val_balanced_accuracy);
        }
        points.push(GridPoint { hyper, mean_val_balanced_accuracy: MeanSd::of(&scores).mean });
    }
    let best = select_best(&points).ok_or(Error::EmptyInput("hyperparameter grid"))?;
    Ok(GridSearch { points, best })
}

fn select_best(points: &[GridPoint]) -> Option<HyperParams> {
    let mut best: Option<&GridPoint> = None;
    for p in points {
        best = match best {
            None => Some(p),
            Some(b) => {
                let better = p.mean_val_balanced_accuracy > b.mean_val_balanced_accuracy
                    || (p.mean_val_balanced_accuracy == b.mean_val_balanced_accuracy && p.hyper.lr < b.hyper.lr);
                Some(if better { p } else { b })
            }
        };
    }
    best.map(|p| p.hyper)
}

/// Random (fair coin per item) and majority (always 0) predictors evaluated
/// on the same folds.
pub fn run_baselines(labels: &[Label], folds: &[Vec<usize>], seed: u64) -> Result<(EvalReport, EvalReport)> {
    let mut coin = rng::seeded(rng::mix(seed, 0xC011));
    let mut out = Vec::new();
    for name in ["random", "majority"] {
        let mut reports = Vec::new();
        let mut preds = Vec::new();
        for (k, test) in folds.iter().enumerate() {
            let truth: Vec<u8> = test.iter().map(|&i| labels[i].bit()).collect();
            let guess: Vec<u8> = test
                .iter()
                .map(|_| if name == "random" { u8::from(rng::bernoulli(&mut coin, 0.5)) } else { 0 })
                .collect();
            let metrics: BinaryMetrics = Confusion::from_predictions(&guess, &truth)?.into();
            for ((&i, &g), &y) in test.iter().zip(&guess).zip(&truth) {
                preds.push(Prediction { index: i, label: y, predicted: g, probability: f64::from(g) });
            }
            reports.push(FoldReport { fold: k, metrics, test: test.clone(), train: Vec::new(), val: Vec::new(), curve: None });
        }
        out.push(EvalReport::from_folds(name, reports, preds));
    }
    let majority = out.pop().expect("two baselines");
    let random = out.pop().expect("two baselines");
    Ok((random, majority))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepPoint {
    pub max_interactions: usize,
    pub balanced_accuracy: MeanSd,
    pub report: EvalReport,
}

/// Cross-validates the model once per context window size, all on the same
/// folds.
pub fn context_window_sweep(
    cfg: &ModelConfig,
    corpus: &Corpus,
    records: &[UserRecord],
    tc: &TrainConfig,
    hyper: &HyperParams,
    n_values: &[usize],
) -> Result<Vec<SweepPoint>> {
    if n_values.iter().any(|&n| !(1..=30).contains(&n)) {
        return Err(Error::InvalidConfig("window sizes must lie in 1..=30".into()));
    }
    let labels: Vec<Label> = records.iter().map(|r| r.label).collect();
    let folds = stratified_kfold(&labels, tc.k_folds, tc.seed)?;
    let mut out = Vec::new();
    for &n in n_values {
        let mut c = cfg.clone();
        c.context.max_interactions = n;
        let data = UserData::build(&c, corpus, records)?;
        let report = cross_validate(&alloc::format!("N={n}"), &c, &data, tc, hyper, &folds)?.report;
        out.push(SweepPoint { max_interactions: n, balanced_accuracy: report.balanced_accuracy, report });
    }
    Ok(out)
}

/// Names and configurations of the ablation and input-variant battery,
/// starting with the full model.
pub fn ablation_configs(base: &ModelConfig) -> Vec<(&'static str, ModelConfig)> {
    let with = |f: &dyn Fn(&mut ModelConfig)| {
        let mut c = base.clone();
        f(&mut c);
        c
    };
    alloc::vec![
        ("full", with(&|c| {
            c.use_body = true;
            c.use_titletag = true;
            c.use_lstm = true;
        })),
        ("body_only", with(&|c| {
            c.use_body = true;
            c.use_titletag = false;
            c.use_lstm = false;
        })),
        ("titletag_only", with(&|c| {
            c.use_body = false;
            c.use_titletag = true;
            c.use_lstm = false;
        })),
        ("body_titletag_no_lstm", with(&|c| {
            c.use_body = true;
            c.use_titletag = true;
            c.use_lstm = false;
        })),
        ("body_lstm", with(&|c| {
            c.use_body = true;
            c.use_titletag = false;
            c.use_lstm = true;
        })),
        ("replies_in_context", with(&|c| c.context.replies_in_context = true)),
        ("no_post_priority", with(&|c| c.context.prioritize_posts = false)),
        ("no_prefix", with(&|c| c.context.include_prefix = false)),
    ]
}

/// Runs every configuration of [`ablation_configs`] on one shared fold
/// split so rows can be compared pairwise.
pub fn run_ablations(
    base: &ModelConfig,
    corpus: &Corpus,
    records: &[UserRecord],
    tc: &TrainConfig,
    hyper: &HyperParams,
) -> Result<Vec<EvalReport>> {
    let labels: Vec<Label> = records.iter().map(|r| r.label).collect();
    let folds = stratified_kfold(&labels, tc.k_folds, tc.seed)?;
    let mut out = Vec::new();
    for (name, cfg) in ablation_configs(base) {
        cfg.validate()?;
        let data = UserData::build(&cfg, corpus, records)?;
        out.push(cross_validate(name, &cfg, &data, tc, hyper, &folds)?.report);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn labels(ones: usize, zeros: usize) -> Vec<Label> {
        let mut v = vec![Label::Sib; ones];
        v.extend(vec![Label::NoSib; zeros]);
        v
    }

    #[test]
    fn kfold_is_a_stratified_partition() {
        let l = labels(10, 10);
        let folds = stratified_kfold(&l, 5, 42).unwrap();
        for f in &folds {
            assert_eq!(f.iter().filter(|&&i| l[i] == Label::Sib).count(), 2);
            assert_eq!(f.len(), 4);
        }
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
        assert_eq!(folds, stratified_kfold(&l, 5, 42).unwrap());
        assert!(matches!(stratified_kfold(&labels(3, 10), 5, 1), Err(Error::ClassTooSmall { class: 1, .. })));
    }

    #[test]
    fn kfold_uneven_classes_stay_within_one() {
        let l = labels(13, 87);
        let folds = stratified_kfold(&l, 5, 7).unwrap();
        for f in &folds {
            let ones = f.iter().filter(|&&i| l[i] == Label::Sib).count() as f64;
            assert!((ones - 13.0 / 5.0).abs() <= 1.0);
            assert!((f.len() as f64 - 20.0).abs() <= 1.0);
        }
    }

    #[test]
    fn early_stopping_on_decreasing_scores() {
        let mut s = EarlyStopping::new(3);
        assert_eq!(s.observe(1, 0.9), StopDecision::Improved);
        assert_eq!(s.observe(2, 0.8), StopDecision::Continue);
        assert_eq!(s.observe(3, 0.7), StopDecision::Continue);
        assert_eq!(s.observe(4, 0.6), StopDecision::Stop);
        assert_eq!(s.best(), Some((1, 0.9)));
        let mut s = EarlyStopping::new(2);
        s.observe(1, 0.5);
        assert_eq!(s.observe(2, 0.5), StopDecision::Continue);
        assert_eq!(s.observe(3, 0.6), StopDecision::Improved);
        let mut s = EarlyStopping::new(2);
        s.observe_with_loss(1, 1.0, 0.5);
        assert_eq!(s.observe_with_loss(2, 1.0, 0.4), StopDecision::Improved);
        assert_eq!(s.observe_with_loss(3, 1.0, 0.45), StopDecision::Continue);
        assert_eq!(s.observe_with_loss(4, 0.9, 0.1), StopDecision::Stop);
        assert_eq!(s.best(), Some((2, 1.0)));
    }

    #[test]
    fn stratified_split_holds_out_each_class() {
        let l = labels(10, 90);
        let idx: Vec<usize> = (0..100).collect();
        let (rest, held) = stratified_split(&idx, &l, 0.1, 3);
        assert_eq!(held.len(), 10);
        assert_eq!(held.iter().filter(|&&i| l[i] == Label::Sib).count(), 1);
        assert_eq!(rest.len() + held.len(), 100);
    }

    #[test]
    fn fold_split_never_touches_test_items() {
        let l = labels(20, 180);
        let folds = stratified_kfold(&l, 5, 1).unwrap();
        let tc = TrainConfig::default();
        for (k, test) in folds.iter().enumerate() {
            let (train, val) = fold_split(&l, test, &HyperParams::default(), &tc, k).unwrap();
            assert!(train.iter().chain(&val).all(|i| !test.contains(i)));
            assert!(train.iter().all(|i| !val.contains(i)));
            let ones = train.iter().filter(|&&i| l[i] == Label::Sib).count();
            assert_eq!(ones * 2, train.len());
        }
    }

    #[test]
    fn baselines() {
        let mut l = labels(400, 9600);
        let mut r = rng::seeded(5);
        rng::shuffle(&mut r, &mut l);
        let folds = stratified_kfold(&l, 5, 42).unwrap();
        let (random, majority) = run_baselines(&l, &folds, 42).unwrap();
        assert_eq!(majority.balanced_accuracy.mean, 0.5);
        assert_eq!(majority.recall.mean, 0.0);
        assert!(majority.precision.is_none());
        let c = random.pooled_confusion();
        assert!((c.balanced_accuracy() - 0.5).abs() < 0.03);
        assert!((c.precision().unwrap() - 0.04).abs() < 0.01);
        assert_eq!(random.predictions.len(), 10_000);
    }

    #[test]
    fn grid_selection_prefers_smaller_lr_on_ties() {
        let p = |lr, s| GridPoint { hyper: HyperParams { lr, ..Default::default() }, mean_val_balanced_accuracy: s };
        assert_eq!(select_best(&[p(0.1, 0.8), p(1e-3, 0.8), p(2e-5, 0.7)]).unwrap().lr, 1e-3);
        assert_eq!(select_best(&[p(0.1, 0.9), p(1e-3, 0.8)]).unwrap().lr, 0.1);
    }

    #[test]
    fn grid_enumerates_all_points() {
        assert_eq!(TrainConfig::default().grid().len(), 3 * 4 * 2 * 3);
    }

    #[test]
    fn ablation_battery_is_valid() {
        let cfgs = ablation_configs(&ModelConfig::compact());
        assert_eq!(cfgs.len(), 8);
        assert!(cfgs.iter().all(|(_, c)| c.validate().is_ok()));
    }
}
