//! Source training, SGD, and the single-pass test-time adaptation runner.

use std::borrow::Borrow;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{make_stream, LabeledData, StreamBatch};
use crate::error::{Error, Result};
use crate::format::sig9;
use crate::losses::{cosine_matrix, cross_entropy_graph, entropy, softmax_probs, LossKind};
use crate::model::{Model, ParamId, ParamSelector, Stats};
use crate::numerics::{argmax, Graph, Tensor};

pub const REPORT_HEADER: [&str; 7] = ["batch_idx", "n", "top1_err", "mean_entropy", "mean_cos_pred", "loss_value", "cum_err"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig { learning_rate: 0.005, momentum: 0.9, weight_decay: 0.0 }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::invalid("learning rate", format!("{} must be finite and >= 0", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum", format!("{} outside [0, 1)", self.momentum)));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::invalid("weight decay", format!("{} must be finite and >= 0", self.weight_decay)));
        }
        Ok(())
    }
}

/// Momentum buffers, created as zeros on the first step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SgdState {
    velocity: Vec<Tensor>,
}

impl SgdState {
    pub fn velocity(&self) -> &[Tensor] {
        &self.velocity
    }
}

/// `v <- m v + g + wd p`, `p <- p - lr v` for each parameter.
pub fn sgd_step(params: &mut [&mut Tensor], grads: &[Tensor], cfg: &SgdConfig, state: &mut SgdState) -> Result<()> {
    cfg.validate()?;
    if params.len() != grads.len() {
        return Err(Error::shape("sgd", format!("{} parameters, {} gradients", params.len(), grads.len())));
    }
    if state.velocity.is_empty() {
        state.velocity = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
    }
    if state.velocity.len() != params.len() {
        return Err(Error::shape("sgd", "optimizer state belongs to a different parameter list"));
    }
    for (i, ((p, g), v)) in params.iter().zip(grads).zip(&state.velocity).enumerate() {
        if p.shape() != g.shape() || p.shape() != v.shape() {
            return Err(Error::shape("sgd", format!("parameter {i}: {:?} vs gradient {:?}", p.shape(), g.shape())));
        }
        if !g.all_finite() {
            return Err(Error::NonFinite(format!("gradient of parameter {i}")));
        }
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut state.velocity) {
        for ((pv, gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vv = cfg.momentum * *vv + gv + cfg.weight_decay * *pv;
            *pv -= cfg.learning_rate * *vv;
        }
        if !p.all_finite() {
            return Err(Error::NonFinite("parameter after sgd step".into()));
        }
    }
    Ok(())
}

/// Apply one step to the model parameters `ids` using `grads` in the same order.
fn step_model(model: &mut Model, ids: &[ParamId], grads: &[Tensor], cfg: &SgdConfig, state: &mut SgdState) -> Result<()> {
    // Temporarily move the tensors out so they can be borrowed together.
    let mut owned: Vec<Tensor> = ids
        .iter()
        .map(|&id| model.param(id).cloned().ok_or_else(|| Error::Invariant(format!("missing parameter {id:?}"))))
        .collect::<Result<_>>()?;
    let mut refs: Vec<&mut Tensor> = owned.iter_mut().collect();
    sgd_step(&mut refs, grads, cfg, state)?;
    for (&id, t) in ids.iter().zip(owned) {
        if let Some(slot) = model.param_mut(id) {
            *slot = t;
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdaptLoss {
    None,
    Em,
    Pl,
    Com,
    Comm,
}

impl AdaptLoss {
    pub fn kind(self) -> Option<LossKind> {
        match self {
            AdaptLoss::None => None,
            AdaptLoss::Em => Some(LossKind::Em),
            AdaptLoss::Pl => Some(LossKind::Pl),
            AdaptLoss::Com => Some(LossKind::Com),
            AdaptLoss::Comm => Some(LossKind::Comm),
        }
    }

    pub fn name(self) -> &'static str {
        self.kind().map_or("none", LossKind::name)
    }
}

impl From<LossKind> for AdaptLoss {
    fn from(k: LossKind) -> Self {
        match k {
            LossKind::Em => AdaptLoss::Em,
            LossKind::Pl => AdaptLoss::Pl,
            LossKind::Com => AdaptLoss::Com,
            LossKind::Comm => AdaptLoss::Comm,
        }
    }
}

impl std::str::FromStr for AdaptLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "none" {
            Ok(AdaptLoss::None)
        } else {
            s.parse::<LossKind>().map(AdaptLoss::from)
        }
    }
}

impl std::fmt::Display for AdaptLoss {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// When a batch's predictions are scored relative to its update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scoring {
    /// From the forward pass that also drives the update.
    #[default]
    BeforeUpdate,
    /// From a second forward pass after the update.
    AfterUpdate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    pub loss: AdaptLoss,
    pub selector: ParamSelector,
    pub sgd: SgdConfig,
    pub batch_size: usize,
    pub stats: Stats,
    pub record_entropy_trace: bool,
    pub seed: u64,
    pub scoring: Scoring,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            loss: AdaptLoss::Comm,
            selector: ParamSelector::AffineOnly,
            sgd: SgdConfig::default(),
            batch_size: 128,
            stats: Stats::Batch,
            record_entropy_trace: false,
            seed: 0,
            scoring: Scoring::BeforeUpdate,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        self.sgd.validate()?;
        if self.batch_size == 0 || (self.stats == Stats::Batch && self.batch_size < 2) {
            return Err(Error::invalid("batch size", format!("{} is too small for {:?} statistics", self.batch_size, self.stats)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchMetrics {
    pub batch_index: usize,
    pub n: usize,
    pub errors: usize,
    pub top1_error: f64,
    pub mean_entropy: f64,
    pub mean_cos_pred: f64,
    /// Zero when the loss is `none`.
    pub loss_value: f64,
    pub clamp_warnings: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunReport {
    pub per_batch: Vec<BatchMetrics>,
    /// `None` when no sample was scored.
    pub cumulative_top1_error: Option<f64>,
    pub clamp_warnings: usize,
    /// Samples discarded as a singleton trailing batch.
    pub dropped: usize,
    pub entropy_trace: Option<Vec<f64>>,
}

impl RunReport {
    pub fn total_samples(&self) -> usize {
        self.per_batch.iter().map(|b| b.n).sum()
    }

    pub fn total_errors(&self) -> usize {
        self.per_batch.iter().map(|b| b.errors).sum()
    }

    /// Report CSV: one row per batch with the running cumulative error, then
    /// a summary row with `batch_idx = -1` holding sample-weighted means.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Malformed(e.to_string());
        w.write_record(REPORT_HEADER).map_err(csv_err)?;
        let (mut errs, mut seen) = (0usize, 0usize);
        for b in &self.per_batch {
            errs += b.errors;
            seen += b.n;
            w.write_record([
                b.batch_index.to_string(),
                b.n.to_string(),
                sig9(b.top1_error),
                sig9(b.mean_entropy),
                sig9(b.mean_cos_pred),
                sig9(b.loss_value),
                sig9(errs as f64 / seen as f64),
            ])
            .map_err(csv_err)?;
        }
        let n = self.total_samples();
        let weighted = |f: fn(&BatchMetrics) -> f64| {
            if n == 0 {
                f64::NAN
            } else {
                self.per_batch.iter().map(|b| f(b) * b.n as f64).sum::<f64>() / n as f64
            }
        };
        let cum = self.cumulative_top1_error.unwrap_or(f64::NAN);
        w.write_record([
            "-1".to_string(),
            n.to_string(),
            sig9(cum),
            sig9(weighted(|b| b.mean_entropy)),
            sig9(weighted(|b| b.mean_cos_pred)),
            sig9(weighted(|b| b.loss_value)),
            sig9(cum),
        ])
        .map_err(csv_err)?;
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}

fn row_argmax(t: &Tensor) -> Vec<usize> {
    (0..t.rows()).map(|i| argmax(t.row_slice(i))).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

struct Scored {
    errors: usize,
    mean_entropy: f64,
    mean_cos_pred: f64,
}

fn score(batch: &StreamBatch, features: &Tensor, logits: &Tensor, omega: &Tensor) -> Result<Scored> {
    let errors = batch.count_errors(&row_argmax(logits))?;
    let mean_entropy = mean(&entropy(&softmax_probs(logits)?)?);
    let mean_cos_pred = mean(&cosine_matrix(features, omega)?.max_per_row());
    Ok(Scored { errors, mean_entropy, mean_cos_pred })
}

/// One online step: forward, score, then (unless the loss is `none`) one SGD
/// update of the selected parameters from the same forward pass.
pub fn adapt_batch(
    model: &mut Model,
    batch: &StreamBatch,
    cfg: &AdaptConfig,
    state: &mut SgdState,
    batch_index: usize,
) -> Result<BatchMetrics> {
    let kind = cfg.loss.kind();
    let mut g = if kind.is_some() { Graph::new() } else { Graph::inference() };
    let x = g.constant(batch.x().clone());
    let pass = model.forward_graph(&mut g, x, cfg.stats, cfg.selector)?;
    let omega = pass.var_of(ParamId::HeadOmega).ok_or_else(|| Error::Invariant("head not bound".into()))?;

    let mut scored = None;
    if cfg.scoring == Scoring::BeforeUpdate {
        scored = Some(score(batch, g.value(pass.features), g.value(pass.logits), g.value(omega))?);
    }

    let (mut loss_value, mut clamp_warnings) = (0.0, 0);
    if let Some(kind) = kind {
        let rec = kind.record(&mut g, pass.features, pass.logits, omega)?;
        loss_value = g.value(rec.value).data()[0];
        clamp_warnings = rec.clamp_warnings;
        if !loss_value.is_finite() {
            return Err(Error::NonFinite(format!("{kind} loss")));
        }
        let grads = g.backward(rec.value)?;
        let ids = model.select_params(cfg.selector);
        let tensors: Vec<Tensor> = ids
            .iter()
            .map(|&id| pass.var_of(id).map(|v| grads.get(v)).ok_or_else(|| Error::Invariant(format!("{id:?} not bound"))))
            .collect::<Result<_>>()?;
        step_model(model, &ids, &tensors, &cfg.sgd, state)?;
        model.head().check_rows()?;
    }

    let scored = match scored {
        Some(s) => s,
        None => {
            let (features, logits) = model.forward(batch.x(), cfg.stats)?;
            score(batch, &features, &logits, &model.head().omega)?
        }
    };
    let n = batch.len();
    Ok(BatchMetrics {
        batch_index,
        n,
        errors: scored.errors,
        top1_error: scored.errors as f64 / n as f64,
        mean_entropy: scored.mean_entropy,
        mean_cos_pred: scored.mean_cos_pred,
        loss_value,
        clamp_warnings,
    })
}

/// Adapt sequentially over `stream`, consuming each batch once.
pub fn run_stream<B, I>(model: &mut Model, stream: I, cfg: &AdaptConfig) -> Result<RunReport>
where
    B: Borrow<StreamBatch>,
    I: IntoIterator<Item = B>,
{
    cfg.validate()?;
    let mut state = SgdState::default();
    let mut report = RunReport::default();
    for (index, batch) in stream.into_iter().enumerate() {
        let m = adapt_batch(model, batch.borrow(), cfg, &mut state, index)
            .map_err(|e| Error::Batch { index, source: Box::new(e) })?;
        report.clamp_warnings += m.clamp_warnings;
        report.per_batch.push(m);
    }
    let total = report.total_samples();
    report.cumulative_top1_error = (total > 0).then(|| report.total_errors() as f64 / total as f64);
    if cfg.record_entropy_trace {
        report.entropy_trace = Some(report.per_batch.iter().map(|b| b.mean_entropy).collect());
    }
    Ok(report)
}

/// Shuffle `data` into a stream seeded by `cfg.seed` and run it.
pub fn adapt_dataset(model: &mut Model, data: &LabeledData, cfg: &AdaptConfig) -> Result<RunReport> {
    cfg.validate()?;
    let stream = make_stream(data, cfg.batch_size, cfg.seed, cfg.stats == Stats::Batch)?;
    let mut report = run_stream(model, &stream.batches, cfg)?;
    report.dropped = stream.dropped.len();
    Ok(report)
}

/// Argmax-of-logits predictions without touching the model.
pub fn predict(model: &Model, x: &Tensor, stats: Stats) -> Result<Vec<usize>> {
    Ok(row_argmax(&model.forward(x, stats)?.1))
}

/// Top-1 error of the unchanged model over the whole dataset.
pub fn evaluate_frozen(model: &Model, data: &LabeledData, stats: Stats) -> Result<f64> {
    let x = data.x()?;
    let preds = predict(model, &x, stats)?;
    let wrong = preds.iter().zip(data.labels()).filter(|(p, y)| p != y).count();
    Ok(wrong as f64 / data.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub sgd: SgdConfig,
    pub batch_size: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    /// Mean cross-entropy per epoch.
    pub epoch_losses: Vec<f64>,
    /// Training-set error with running statistics after the last epoch.
    pub final_train_error: f64,
}

/// Supervised cross-entropy training of every parameter on shuffled
/// mini-batches, folding batch moments into the running statistics.
pub fn train_source(model: &mut Model, data: &LabeledData, cfg: &TrainConfig) -> Result<TrainSummary> {
    cfg.sgd.validate()?;
    if cfg.batch_size < 2 {
        return Err(Error::invalid("batch size", "training uses batch statistics and needs at least 2"));
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.dim() != model.input_dim() || data.n_classes() > model.classes() {
        return Err(Error::shape(
            "train",
            format!("data ({} features, {} classes) vs model ({}, {})", data.dim(), data.n_classes(), model.input_dim(), model.classes()),
        ));
    }
    let ids = model.select_params(ParamSelector::All);
    let mut state = SgdState::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut batches) = (0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let part = data.select(chunk);
            let diverged = |e: Error| if e.is_numeric_failure() { Error::Divergence { epoch, batch: b } } else { e };
            let mut g = Graph::new();
            let x = g.constant(part.x()?);
            let pass = model.forward_graph(&mut g, x, Stats::Batch, ParamSelector::All).map_err(diverged)?;
            let rec = cross_entropy_graph(&mut g, pass.logits, part.labels()).map_err(diverged)?;
            let loss = g.value(rec.value).data()[0];
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, batch: b });
            }
            let grads = g.backward(rec.value).map_err(diverged)?;
            let tensors: Vec<Tensor> = ids.iter().map(|&id| grads.get(pass.var_of(id).expect("all params bound"))).collect();
            step_model(model, &ids, &tensors, &cfg.sgd, &mut state).map_err(diverged)?;
            model.absorb_batch_moments(&pass.batch_moments);
            total += loss;
            batches += 1;
        }
        epoch_losses.push(if batches > 0 { total / batches as f64 } else { f64::NAN });
    }
    model.head().check_rows()?;
    let final_train_error = evaluate_frozen(model, data, Stats::Running)?;
    Ok(TrainSummary { epoch_losses, final_train_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_blobs, DatasetSpec};
    use crate::model::{init_model, ModelSpec};

    fn scalar(v: f64) -> Tensor {
        Tensor::scalar(v).unwrap()
    }

    #[test]
    fn sgd_zero_lr_is_noop() {
        let mut p = Tensor::row(vec![1.5, -2.0]).unwrap();
        let before = p.clone();
        let cfg = SgdConfig { learning_rate: 0.0, momentum: 0.9, weight_decay: 0.0 };
        sgd_step(&mut [&mut p], &[Tensor::row(vec![3.0, 4.0]).unwrap()], &cfg, &mut SgdState::default()).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn sgd_plain_step() {
        let mut p = scalar(1.0);
        let cfg = SgdConfig { learning_rate: 0.1, momentum: 0.0, weight_decay: 0.0 };
        sgd_step(&mut [&mut p], &[scalar(2.0)], &cfg, &mut SgdState::default()).unwrap();
        assert!((p.data()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn sgd_momentum_recurrence() {
        let mut p = scalar(0.0);
        let cfg = SgdConfig { learning_rate: 1.0, momentum: 0.9, weight_decay: 0.0 };
        let mut st = SgdState::default();
        sgd_step(&mut [&mut p], &[scalar(1.0)], &cfg, &mut st).unwrap();
        assert_eq!(p.data()[0], -1.0);
        sgd_step(&mut [&mut p], &[scalar(1.0)], &cfg, &mut st).unwrap();
        assert!((p.data()[0] + 2.9).abs() < 1e-15);
    }

    #[test]
    fn sgd_errors() {
        let mut p = scalar(0.0);
        let cfg = SgdConfig::default();
        assert!(sgd_step(&mut [&mut p], &[Tensor::row(vec![1.0, 2.0]).unwrap()], &cfg, &mut SgdState::default()).is_err());
        assert!(sgd_step(&mut [&mut p], &[], &cfg, &mut SgdState::default()).is_err());
        let bad = SgdConfig { momentum: 1.0, ..cfg };
        assert!(sgd_step(&mut [&mut p], &[scalar(1.0)], &bad, &mut SgdState::default()).is_err());
    }

    fn setup() -> (Model, LabeledData) {
        let split = gen_blobs(&DatasetSpec { n_classes: 3, feature_dim: 6, samples_per_class: 40, cluster_spread: 0.3, seed: 1 })
            .unwrap();
        let model = init_model(&ModelSpec { widths: vec![6, 12, 8], classes: 3, bias: false, seed: 2 }).unwrap();
        (model, split.test)
    }

    #[test]
    fn loss_none_matches_frozen_evaluation() {
        let (model, data) = setup();
        let mut m = model.clone();
        let cfg = AdaptConfig { loss: AdaptLoss::None, batch_size: 8, ..AdaptConfig::default() };
        let stream = make_stream(&data, 8, 3, true).unwrap();
        let report = run_stream(&mut m, &stream.batches, &cfg).unwrap();
        assert_eq!(m, model);
        let direct: usize = stream
            .batches
            .iter()
            .map(|b| {
                let preds = predict(&model, b.x(), Stats::Batch).unwrap();
                b.count_errors(&preds).unwrap()
            })
            .sum();
        assert_eq!(report.total_errors(), direct);
        assert_eq!(report.per_batch.len(), stream.batches.len());
    }

    #[test]
    fn loss_none_running_equals_evaluate_frozen() {
        let (model, data) = setup();
        let mut m = model.clone();
        let cfg = AdaptConfig { loss: AdaptLoss::None, stats: Stats::Running, batch_size: 7, ..AdaptConfig::default() };
        let report = adapt_dataset(&mut m, &data, &cfg).unwrap();
        let frozen = evaluate_frozen(&model, &data, Stats::Running).unwrap();
        assert!((report.cumulative_top1_error.unwrap() - frozen).abs() <= 1e-12);
    }

    #[test]
    fn zero_lr_matches_none_baseline() {
        let (model, data) = setup();
        let base = adapt_dataset(&mut model.clone(), &data, &AdaptConfig { loss: AdaptLoss::None, batch_size: 8, ..AdaptConfig::default() })
            .unwrap();
        for loss in [AdaptLoss::Em, AdaptLoss::Pl, AdaptLoss::Com, AdaptLoss::Comm] {
            let mut m = model.clone();
            let cfg = AdaptConfig {
                loss,
                batch_size: 8,
                sgd: SgdConfig { learning_rate: 0.0, ..SgdConfig::default() },
                ..AdaptConfig::default()
            };
            let r = adapt_dataset(&mut m, &data, &cfg).unwrap();
            assert_eq!(m.state_bits(), model.state_bits(), "{loss}");
            for (a, b) in r.per_batch.iter().zip(&base.per_batch) {
                assert_eq!((a.errors, a.mean_entropy, a.mean_cos_pred), (b.errors, b.mean_entropy, b.mean_cos_pred));
            }
        }
    }

    #[test]
    fn empty_stream_report() {
        let (mut model, _) = setup();
        let r = run_stream(&mut model, Vec::<StreamBatch>::new(), &AdaptConfig::default()).unwrap();
        assert!(r.per_batch.is_empty());
        assert_eq!(r.cumulative_top1_error, None);
        let csv = String::from_utf8(r.to_csv().unwrap()).unwrap();
        assert_eq!(csv, "batch_idx,n,top1_err,mean_entropy,mean_cos_pred,loss_value,cum_err\n-1,0,nan,nan,nan,nan,nan\n");
    }

    #[test]
    fn errors_carry_batch_index() {
        let (mut model, data) = setup();
        let ok = StreamBatch::new(data.select(&[0, 9, 18, 1]).x().unwrap(), vec![0; 4]).unwrap();
        let bad = StreamBatch::new(Tensor::filled(&[4, 5], 0.5), vec![0; 4]).unwrap();
        let cfg = AdaptConfig { loss: AdaptLoss::None, ..AdaptConfig::default() };
        match run_stream(&mut model, [&ok, &bad], &cfg) {
            Err(Error::Batch { index, .. }) => assert_eq!(index, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn batch_stats_need_two_samples() {
        let cfg = AdaptConfig { batch_size: 1, ..AdaptConfig::default() };
        assert!(cfg.validate().is_err());
        assert!(AdaptConfig { stats: Stats::Running, ..cfg }.validate().is_ok());
    }

    #[test]
    fn train_zero_epochs_is_identity() {
        let (model, data) = setup();
        let mut m = model.clone();
        let cfg = TrainConfig { epochs: 0, sgd: SgdConfig::default(), batch_size: 16, seed: 0 };
        train_source(&mut m, &data, &cfg).unwrap();
        assert_eq!(m, model);
    }

    #[test]
    fn evaluate_empty_dataset() {
        let (model, _) = setup();
        let empty = LabeledData::new(vec![], 6, vec![], 3).unwrap();
        assert!(matches!(evaluate_frozen(&model, &empty, Stats::Running), Err(Error::EmptyDataset)));
    }
}
