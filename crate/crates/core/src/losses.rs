//! Adaptation objectives and the quantities they are built from.
//!
//! Everything is recorded on a [`Graph`] so the same code path produces the
//! loss value and its gradient. Value-only wrappers are provided for callers
//! that just need numbers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MIN_WEIGHT_NORM;
use crate::numerics::{argmax, softmax_rows, Axis, Graph, Tensor, Var};

/// Floor applied to cosines before the CoMM log-ratio.
pub const COMM_FLOOR: f64 = 1e-6;
/// Feature rows below this norm have no direction.
pub const MIN_FEATURE_NORM: f64 = 1e-9;
/// Tolerance on probability row sums accepted by [`entropy`].
pub const PROB_SUM_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Mean prediction entropy.
    Em,
    /// Cross-entropy against the model's own argmax label.
    Pl,
    /// Mean arccos of the best feature-weight cosine.
    Com,
    /// Cosine max-min: predicted-class share of the clamped cosine mass.
    Comm,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [LossKind::Em, LossKind::Pl, LossKind::Com, LossKind::Comm];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Em => "em",
            LossKind::Pl => "pl",
            LossKind::Com => "com",
            LossKind::Comm => "comm",
        }
    }

    /// Whether the loss reads features and class weights rather than logits.
    pub fn is_cosine(self) -> bool {
        matches!(self, LossKind::Com | LossKind::Comm)
    }

    /// Record this loss. Cosine losses use `features` and `omega`, the others `logits`.
    pub fn record(self, g: &mut Graph, features: Var, logits: Var, omega: Var) -> Result<RecordedLoss> {
        match self {
            LossKind::Em => em_graph(g, logits),
            LossKind::Pl => pl_graph(g, logits),
            LossKind::Com => com_graph(g, features, omega),
            LossKind::Comm => comm_graph(g, features, omega),
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "em" => Ok(LossKind::Em),
            "pl" => Ok(LossKind::Pl),
            "com" => Ok(LossKind::Com),
            "comm" => Ok(LossKind::Comm),
            other => Err(Error::invalid("loss", format!("unknown loss {other:?}"))),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A loss recorded on a graph.
#[derive(Clone, Copy, Debug)]
pub struct RecordedLoss {
    /// Scalar mean over the batch.
    pub value: Var,
    /// `[N, 1]` per-sample losses.
    pub per_sample: Var,
    /// CoMM rows whose cosines were all at or below the floor.
    pub clamp_warnings: usize,
}

/// Loss value with its per-sample decomposition; `value` is their mean.
#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub per_sample: Vec<f64>,
    pub clamp_warnings: usize,
}

impl LossValue {
    fn read(g: &Graph, rec: RecordedLoss) -> Self {
        LossValue {
            value: g.value(rec.value).data()[0],
            per_sample: g.value(rec.per_sample).data().to_vec(),
            clamp_warnings: rec.clamp_warnings,
        }
    }
}

/// `N x C` cosines between feature rows and class weight vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct CosineMatrix {
    values: Tensor,
}

impl CosineMatrix {
    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row_slice(i)
    }

    pub fn samples(&self) -> usize {
        self.values.rows()
    }

    /// Cosine of the maximally aligned class for each sample.
    pub fn max_per_row(&self) -> Vec<f64> {
        (0..self.samples()).map(|i| self.row(i)[argmax(self.row(i))]).collect()
    }
}

fn check_logits(op: &'static str, t: &Tensor) -> Result<()> {
    if t.shape().len() != 2 {
        return Err(Error::shape(op, format!("expected [N, C], got {:?}", t.shape())));
    }
    Ok(())
}

/// Row-wise softmax with max subtraction.
pub fn softmax_probs(logits: &Tensor) -> Result<Tensor> {
    check_logits("softmax", logits)?;
    Ok(softmax_rows(logits))
}

/// Natural-log entropy of each probability row, with `0 log 0 = 0`.
pub fn entropy(p: &Tensor) -> Result<Vec<f64>> {
    check_logits("entropy", p)?;
    (0..p.rows())
        .map(|i| {
            let row = p.row_slice(i);
            if let Some(&v) = row.iter().find(|v| **v < 0.0) {
                return Err(Error::invalid("probabilities", format!("row {i} has negative entry {v}")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > PROB_SUM_TOL {
                return Err(Error::invalid("probabilities", format!("row {i} sums to {total}")));
            }
            Ok(-row.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>())
        })
        .collect()
}

/// Constant `[N, 1]` holding each row's maximum.
fn row_max_const(g: &mut Graph, logits: Var) -> Var {
    let t = g.value(logits);
    let maxes: Vec<f64> = (0..t.rows()).map(|i| t.row_slice(i)[argmax(t.row_slice(i))]).collect();
    let n = maxes.len();
    g.constant(Tensor::from_parts(vec![n, 1], maxes))
}

fn one_hot(n: usize, c: usize, idx: &[usize]) -> Tensor {
    let mut t = Tensor::zeros(&[n, c]);
    for (i, &k) in idx.iter().enumerate() {
        t.data_mut()[i * c + k] = 1.0;
    }
    t
}

/// `log sum exp` of each row after shifting by the (constant) row maximum,
/// plus the shifted logits.
fn shifted_lse(g: &mut Graph, logits: Var) -> Result<(Var, Var)> {
    let mx = row_max_const(g, logits);
    let shifted = g.sub(logits, mx)?;
    let e = g.exp(shifted)?;
    let s = g.sum(e, Axis::Cols)?;
    Ok((g.log(s)?, shifted))
}

/// Entropy of `softmax(logits)` per sample, written as
/// `logsumexp(x) - sum_c p_c x_c` so it stays finite for saturated rows.
pub fn em_graph(g: &mut Graph, logits: Var) -> Result<RecordedLoss> {
    check_logits("em", g.value(logits))?;
    let (lse, shifted) = shifted_lse(g, logits)?;
    let p = g.softmax_rows(logits)?;
    let px = g.mul(p, shifted)?;
    let expected = g.sum(px, Axis::Cols)?;
    let per_sample = g.sub(lse, expected)?;
    let value = g.mean(per_sample, Axis::All)?;
    Ok(RecordedLoss { value, per_sample, clamp_warnings: 0 })
}

/// Cross-entropy of `softmax(logits)` against fixed integer labels.
pub fn cross_entropy_graph(g: &mut Graph, logits: Var, labels: &[usize]) -> Result<RecordedLoss> {
    check_logits("cross-entropy", g.value(logits))?;
    let t = g.value(logits);
    let (n, c) = (t.rows(), t.cols());
    if labels.len() != n || labels.iter().any(|&y| y >= c) {
        return Err(Error::shape("cross-entropy", format!("{} labels for {n} rows of {c} classes", labels.len())));
    }
    let target = g.constant(one_hot(n, c, labels));
    let (lse, shifted) = shifted_lse(g, logits)?;
    let picked = g.mul(shifted, target)?;
    let picked = g.sum(picked, Axis::Cols)?;
    let per_sample = g.sub(lse, picked)?;
    let value = g.mean(per_sample, Axis::All)?;
    Ok(RecordedLoss { value, per_sample, clamp_warnings: 0 })
}

/// Cross-entropy against the argmax of the logits. The label is a constant,
/// so the logit gradient is `p - onehot`.
pub fn pl_graph(g: &mut Graph, logits: Var) -> Result<RecordedLoss> {
    check_logits("pl", g.value(logits))?;
    let t = g.value(logits);
    let labels: Vec<usize> = (0..t.rows()).map(|i| argmax(t.row_slice(i))).collect();
    cross_entropy_graph(g, logits, &labels)
}

fn check_cosine_inputs(g: &Graph, z: Var, omega: Var) -> Result<()> {
    let (zt, wt) = (g.value(z), g.value(omega));
    if zt.shape().len() != 2 || wt.shape().len() != 2 || zt.cols() != wt.cols() {
        return Err(Error::shape("cosine", format!("features {:?} vs weights {:?}", zt.shape(), wt.shape())));
    }
    let degenerate: Vec<usize> = (0..zt.rows())
        .filter(|&i| zt.row_slice(i).iter().map(|v| v * v).sum::<f64>().sqrt() < MIN_FEATURE_NORM)
        .collect();
    if !degenerate.is_empty() {
        return Err(Error::DegenerateFeatures { rows: degenerate });
    }
    for c in 0..wt.rows() {
        if wt.row_slice(c).iter().map(|v| v * v).sum::<f64>().sqrt() < MIN_WEIGHT_NORM {
            return Err(Error::Invariant(format!("class weight row {c} is zero")));
        }
    }
    Ok(())
}

/// `[N, C]` matrix of `(w_c . z_i) / (|w_c| |z_i|)`.
pub fn cosine_graph(g: &mut Graph, z: Var, omega: Var) -> Result<Var> {
    check_cosine_inputs(g, z, omega)?;
    let zn = g.l2_norm_rows(z)?;
    let wn = g.l2_norm_rows(omega)?;
    let wn_t = g.transpose(wn)?;
    let omega_t = g.transpose(omega)?;
    let dot = g.matmul(z, omega_t)?;
    let by_z = g.div(dot, zn)?;
    g.div(by_z, wn_t)
}

/// Mean arccos of the largest cosine per sample.
pub fn com_graph(g: &mut Graph, z: Var, omega: Var) -> Result<RecordedLoss> {
    let cos = cosine_graph(g, z, omega)?;
    let (best, _) = g.max_rows(cos)?;
    let per_sample = g.arccos(best)?;
    let value = g.mean(per_sample, Axis::All)?;
    Ok(RecordedLoss { value, per_sample, clamp_warnings: 0 })
}

/// `-log(c~_hat / sum_j c~_j)` with `c~ = max(cos, 1e-6)` and `hat` the argmax
/// of the unclamped cosines.
pub fn comm_graph(g: &mut Graph, z: Var, omega: Var) -> Result<RecordedLoss> {
    let cos = cosine_graph(g, z, omega)?;
    let ct = g.value(cos);
    let (n, c) = (ct.rows(), ct.cols());
    let predicted: Vec<usize> = (0..n).map(|i| argmax(ct.row_slice(i))).collect();
    let clamp_warnings = (0..n).filter(|&i| ct.row_slice(i).iter().all(|&v| v <= COMM_FLOOR)).count();
    let mask = g.constant(one_hot(n, c, &predicted));
    let clamped = g.clamp_min(cos, COMM_FLOOR)?;
    let picked = g.mul(clamped, mask)?;
    let numer = g.sum(picked, Axis::Cols)?;
    let denom = g.sum(clamped, Axis::Cols)?;
    let log_num = g.log(numer)?;
    let log_den = g.log(denom)?;
    let per_sample = g.sub(log_den, log_num)?;
    let value = g.mean(per_sample, Axis::All)?;
    Ok(RecordedLoss { value, per_sample, clamp_warnings })
}

pub fn cosine_matrix(z: &Tensor, omega: &Tensor) -> Result<CosineMatrix> {
    let mut g = Graph::inference();
    let (zv, wv) = (g.constant(z.clone()), g.constant(omega.clone()));
    let cos = cosine_graph(&mut g, zv, wv)?;
    Ok(CosineMatrix { values: g.value(cos).clone() })
}

/// Maximally aligned class per sample; ties go to the lowest index.
pub fn predicted_class(cos: &CosineMatrix) -> Vec<usize> {
    (0..cos.samples()).map(|i| argmax(cos.row(i))).collect()
}

fn eval_logit_loss(logits: &Tensor, f: fn(&mut Graph, Var) -> Result<RecordedLoss>) -> Result<LossValue> {
    let mut g = Graph::inference();
    let x = g.constant(logits.clone());
    let rec = f(&mut g, x)?;
    Ok(LossValue::read(&g, rec))
}

fn eval_cosine_loss(z: &Tensor, omega: &Tensor, f: fn(&mut Graph, Var, Var) -> Result<RecordedLoss>) -> Result<LossValue> {
    let mut g = Graph::inference();
    let (zv, wv) = (g.constant(z.clone()), g.constant(omega.clone()));
    let rec = f(&mut g, zv, wv)?;
    Ok(LossValue::read(&g, rec))
}

pub fn loss_em(logits: &Tensor) -> Result<LossValue> {
    eval_logit_loss(logits, em_graph)
}

pub fn loss_pl(logits: &Tensor) -> Result<LossValue> {
    eval_logit_loss(logits, pl_graph)
}

pub fn loss_com(z: &Tensor, omega: &Tensor) -> Result<LossValue> {
    eval_cosine_loss(z, omega, com_graph)
}

pub fn loss_comm(z: &Tensor, omega: &Tensor) -> Result<LossValue> {
    eval_cosine_loss(z, omega, comm_graph)
}

/// Gradient of a logit loss with respect to the logits.
pub fn logit_gradient(kind: LossKind, logits: &Tensor) -> Result<Tensor> {
    if kind.is_cosine() {
        return Err(Error::invalid("loss", format!("{kind} is not a function of logits")));
    }
    let mut g = Graph::new();
    let x = g.param(logits.clone());
    let dummy = g.constant(Tensor::identity(1));
    let rec = kind.record(&mut g, dummy, x, dummy)?;
    Ok(g.backward(rec.value)?.get(x))
}

/// Gradients of a cosine loss with respect to features and class weights.
pub fn cosine_gradients(kind: LossKind, z: &Tensor, omega: &Tensor) -> Result<(Tensor, Tensor)> {
    if !kind.is_cosine() {
        return Err(Error::invalid("loss", format!("{kind} is not a cosine loss")));
    }
    let mut g = Graph::new();
    let (zv, wv) = (g.param(z.clone()), g.param(omega.clone()));
    let rec = kind.record(&mut g, zv, zv, wv)?;
    let grads = g.backward(rec.value)?;
    Ok((grads.get(zv), grads.get(wv)))
}

/// Partial derivatives of one CoMM per-sample term with respect to its
/// (unclamped) cosines: `-1/c_hat + 1/S` for the predicted class, `1/S` for
/// others, `0` where the floor is active.
pub fn comm_cosine_partials(cosines: &[f64]) -> Result<Vec<f64>> {
    let t = Tensor::row(cosines.to_vec())?;
    let mut g = Graph::new();
    let cos = g.param(t);
    let ct = g.value(cos);
    let hat = argmax(ct.row_slice(0));
    let mask = g.constant(one_hot(1, cosines.len(), &[hat]));
    let clamped = g.clamp_min(cos, COMM_FLOOR)?;
    let picked = g.mul(clamped, mask)?;
    let numer = g.sum(picked, Axis::Cols)?;
    let denom = g.sum(clamped, Axis::Cols)?;
    let ln = g.log(numer)?;
    let ld = g.log(denom)?;
    let l = g.sub(ld, ln)?;
    Ok(g.backward(l)?.get(cos).into_data())
}
