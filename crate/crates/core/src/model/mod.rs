//! Classifier `h = g . f`: a dense feature extractor with batch normalization
//! followed by a linear head whose rows are the class weight vectors.

mod checkpoint;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Axis, Graph, Tensor, Var};

pub use checkpoint::{load_checkpoint, save_checkpoint, FORMAT_VERSION};

/// Variance epsilon of every normalization layer.
pub const NORM_EPS: f64 = 1e-5;
/// Weight of the newest batch in the running-statistics update.
pub const RUNNING_MOMENTUM: f64 = 0.1;
/// Smallest admissible class weight norm.
pub const MIN_WEIGHT_NORM: f64 = 1e-9;

/// Per-channel batch normalization with a learnable affine transform.
#[derive(Clone, Debug, PartialEq)]
pub struct NormLayer {
    pub gamma: Tensor,
    pub beta_norm: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub epsilon: f64,
}

impl NormLayer {
    pub fn new(width: usize) -> Self {
        NormLayer {
            gamma: Tensor::filled(&[1, width], 1.0),
            beta_norm: Tensor::zeros(&[1, width]),
            running_mean: Tensor::zeros(&[1, width]),
            running_var: Tensor::filled(&[1, width], 1.0),
            epsilon: NORM_EPS,
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.cols()
    }

    fn validate(&self, idx: usize) -> Result<()> {
        let w = self.width();
        for (name, t) in [
            ("gamma", &self.gamma),
            ("beta_norm", &self.beta_norm),
            ("running_mean", &self.running_mean),
            ("running_var", &self.running_var),
        ] {
            if t.shape() != [1, w] {
                return Err(Error::Invariant(format!("layer {idx}: {name} has shape {:?}, expected [1, {w}]", t.shape())));
            }
        }
        if self.running_var.data().iter().any(|&v| v < 0.0) {
            return Err(Error::Invariant(format!("layer {idx}: negative running variance")));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Invariant(format!("layer {idx}: epsilon must be positive")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    /// `x W + b` with `W: [in, out]`, `b: [1, out]`.
    Dense { weight: Tensor, bias: Tensor },
    Norm(NormLayer),
    Relu,
}

/// Linear classifier head. `omega` is `[C, D]`, one weight vector per class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierHead {
    pub omega: Tensor,
    pub beta: Option<Tensor>,
}

impl ClassifierHead {
    pub fn classes(&self) -> usize {
        self.omega.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.omega.cols()
    }

    /// Every class weight vector must have norm at least [`MIN_WEIGHT_NORM`].
    pub fn check_rows(&self) -> Result<()> {
        for c in 0..self.classes() {
            let n = self.omega.row_slice(c).iter().map(|v| v * v).sum::<f64>().sqrt();
            if n < MIN_WEIGHT_NORM {
                return Err(Error::Invariant(format!("head row {c} has norm {n:e} < {MIN_WEIGHT_NORM:e}")));
            }
        }
        Ok(())
    }
}

/// Which normalization statistics a forward pass uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stats {
    /// Mean and (biased) variance of the current batch; running statistics untouched.
    Batch,
    /// Stored running statistics.
    Running,
}

/// Which parameters an optimizer may update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamSelector {
    /// Normalization scale and shift only.
    AffineOnly,
    /// Everything before the head.
    FeatureExtractor,
    All,
}

/// Stable name of one parameter tensor inside a [`Model`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamId {
    DenseWeight(usize),
    DenseBias(usize),
    Gamma(usize),
    BetaNorm(usize),
    HeadOmega,
    HeadBias,
}

impl ParamId {
    pub fn is_affine(self) -> bool {
        matches!(self, ParamId::Gamma(_) | ParamId::BetaNorm(_))
    }
}

/// Layer widths and seed for [`init_model`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Input width followed by the output width of each dense block; the last
    /// entry is the feature width `D`.
    pub widths: Vec<usize>,
    pub classes: usize,
    pub bias: bool,
    pub seed: u64,
}

/// Output of a recorded forward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub features: Var,
    pub logits: Var,
    /// Graph leaves for the parameters, in `select_params(All)` order. Selected
    /// parameters are trainable, the rest are constants.
    pub bound: Vec<(ParamId, Var)>,
    /// Batch mean and unbiased variance per norm layer (batch statistics only).
    pub batch_moments: Vec<(usize, Vec<f64>, Vec<f64>)>,
}

impl ForwardPass {
    pub fn var_of(&self, id: ParamId) -> Option<Var> {
        self.bound.iter().find(|(p, _)| *p == id).map(|(_, v)| *v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    input_dim: usize,
    layers: Vec<Layer>,
    head: ClassifierHead,
}

/// Glorot-uniform `[rows, cols]` matrix with fan sum `fan`.
fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan: usize) -> Tensor {
    let limit = (6.0 / fan as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::from_parts(vec![rows, cols], data)
}

/// Dense -> norm -> relu blocks for each consecutive pair of widths, then a
/// head of `classes` rows. Dense and head weights are Glorot-uniform, biases
/// zero, `gamma = 1`, `beta_norm = 0`, running mean 0 and variance 1.
pub fn init_model(spec: &ModelSpec) -> Result<Model> {
    if spec.widths.len() < 2 {
        return Err(Error::invalid("model spec", "need an input width and at least one block (one norm layer)"));
    }
    if spec.widths.contains(&0) || spec.classes == 0 {
        return Err(Error::invalid("model spec", "widths and class count must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut layers = Vec::new();
    for pair in spec.widths.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        layers.push(Layer::Dense {
            weight: glorot(&mut rng, fan_in, fan_out, fan_in + fan_out),
            bias: Tensor::zeros(&[1, fan_out]),
        });
        layers.push(Layer::Norm(NormLayer::new(fan_out)));
        layers.push(Layer::Relu);
    }
    let d = *spec.widths.last().expect("non-empty");
    let head = ClassifierHead {
        omega: glorot(&mut rng, spec.classes, d, spec.classes + d),
        beta: spec.bias.then(|| Tensor::zeros(&[1, spec.classes])),
    };
    Model::from_parts(spec.widths[0], layers, head)
}

impl Model {
    /// Assemble and validate a model. Layer shapes must chain from
    /// `input_dim` to the head's feature width.
    pub fn from_parts(input_dim: usize, layers: Vec<Layer>, head: ClassifierHead) -> Result<Self> {
        let m = Model { input_dim, layers, head };
        m.validate()?;
        Ok(m)
    }

    /// A model with no extractor: features are the inputs.
    pub fn head_only(omega: Tensor, beta: Option<Tensor>) -> Result<Self> {
        let d = omega.cols();
        Model::from_parts(d, Vec::new(), ClassifierHead { omega, beta })
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Invariant("input width must be positive".into()));
        }
        let mut width = self.input_dim;
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Dense { weight, bias } => {
                    if weight.shape().len() != 2 || weight.rows() != width {
                        return Err(Error::Invariant(format!(
                            "layer {i}: dense weight {:?} does not take width {width}",
                            weight.shape()
                        )));
                    }
                    width = weight.cols();
                    if bias.shape() != [1, width] {
                        return Err(Error::Invariant(format!("layer {i}: bias shape {:?}", bias.shape())));
                    }
                }
                Layer::Norm(n) => {
                    n.validate(i)?;
                    if n.width() != width {
                        return Err(Error::Invariant(format!("layer {i}: norm width {} != {width}", n.width())));
                    }
                }
                Layer::Relu => {}
            }
        }
        if self.head.omega.shape().len() != 2 || self.head.feature_dim() != width {
            return Err(Error::Invariant(format!(
                "head omega {:?} does not take feature width {width}",
                self.head.omega.shape()
            )));
        }
        if let Some(b) = &self.head.beta {
            if b.shape() != [1, self.head.classes()] {
                return Err(Error::Invariant(format!("head bias shape {:?}", b.shape())));
            }
        }
        self.head.check_rows()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.head.feature_dim()
    }

    pub fn classes(&self) -> usize {
        self.head.classes()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn head(&self) -> &ClassifierHead {
        &self.head
    }

    pub fn bias_enabled(&self) -> bool {
        self.head.beta.is_some()
    }

    pub fn norm_layers(&self) -> impl Iterator<Item = (usize, &NormLayer)> {
        self.layers.iter().enumerate().filter_map(|(i, l)| match l {
            Layer::Norm(n) => Some((i, n)),
            _ => None,
        })
    }

    pub fn norm_layer_mut(&mut self, idx: usize) -> Option<&mut NormLayer> {
        match self.layers.get_mut(idx) {
            Some(Layer::Norm(n)) => Some(n),
            _ => None,
        }
    }

    /// Parameter handles in deterministic order: layer order, then the head;
    /// within a layer weight before bias and gamma before beta_norm.
    pub fn select_params(&self, selector: ParamSelector) -> Vec<ParamId> {
        let mut ids = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Dense { .. } if selector != ParamSelector::AffineOnly => {
                    ids.push(ParamId::DenseWeight(i));
                    ids.push(ParamId::DenseBias(i));
                }
                Layer::Norm(_) => {
                    ids.push(ParamId::Gamma(i));
                    ids.push(ParamId::BetaNorm(i));
                }
                _ => {}
            }
        }
        if selector == ParamSelector::All {
            ids.push(ParamId::HeadOmega);
            if self.bias_enabled() {
                ids.push(ParamId::HeadBias);
            }
        }
        ids
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        match (id, &self.head) {
            (ParamId::HeadOmega, h) => Some(&h.omega),
            (ParamId::HeadBias, h) => h.beta.as_ref(),
            (ParamId::DenseWeight(i), _) => match self.layers.get(i) {
                Some(Layer::Dense { weight, .. }) => Some(weight),
                _ => None,
            },
            (ParamId::DenseBias(i), _) => match self.layers.get(i) {
                Some(Layer::Dense { bias, .. }) => Some(bias),
                _ => None,
            },
            (ParamId::Gamma(i), _) => match self.layers.get(i) {
                Some(Layer::Norm(n)) => Some(&n.gamma),
                _ => None,
            },
            (ParamId::BetaNorm(i), _) => match self.layers.get(i) {
                Some(Layer::Norm(n)) => Some(&n.beta_norm),
                _ => None,
            },
        }
    }

    pub fn param_mut(&mut self, id: ParamId) -> Option<&mut Tensor> {
        match id {
            ParamId::HeadOmega => Some(&mut self.head.omega),
            ParamId::HeadBias => self.head.beta.as_mut(),
            ParamId::DenseWeight(i) => match self.layers.get_mut(i) {
                Some(Layer::Dense { weight, .. }) => Some(weight),
                _ => None,
            },
            ParamId::DenseBias(i) => match self.layers.get_mut(i) {
                Some(Layer::Dense { bias, .. }) => Some(bias),
                _ => None,
            },
            ParamId::Gamma(i) => self.norm_layer_mut(i).map(|n| &mut n.gamma),
            ParamId::BetaNorm(i) => self.norm_layer_mut(i).map(|n| &mut n.beta_norm),
        }
    }

    /// Number of scalars across the selected parameters.
    pub fn count_scalars(&self, ids: &[ParamId]) -> usize {
        ids.iter().filter_map(|&id| self.param(id)).map(Tensor::numel).sum()
    }

    /// Every stored value as raw bits: parameters in `select_params(All)`
    /// order, then running statistics. Equal vectors mean bit-identical models.
    pub fn state_bits(&self) -> Vec<u64> {
        let mut bits: Vec<u64> = self
            .select_params(ParamSelector::All)
            .into_iter()
            .filter_map(|id| self.param(id))
            .flat_map(|t| t.data().iter().map(|v| v.to_bits()))
            .collect();
        for (_, n) in self.norm_layers() {
            bits.extend(n.running_mean.data().iter().map(|v| v.to_bits()));
            bits.extend(n.running_var.data().iter().map(|v| v.to_bits()));
            bits.push(n.epsilon.to_bits());
        }
        bits
    }

    /// Record `x -> (features, logits)` on `graph`. Parameters picked by
    /// `selector` become trainable leaves.
    pub fn forward_graph(&self, graph: &mut Graph, x: Var, stats: Stats, selector: ParamSelector) -> Result<ForwardPass> {
        let xv = graph.value(x);
        if xv.shape().len() != 2 || xv.cols() != self.input_dim {
            return Err(Error::shape("forward", format!("input {:?}, model expects width {}", xv.shape(), self.input_dim)));
        }
        let n = xv.rows();
        if stats == Stats::Batch && n < 2 {
            return Err(Error::invalid("batch", "batch statistics need at least 2 samples"));
        }
        let selected = self.select_params(selector);
        let mut bound = Vec::new();
        let mut bind = |graph: &mut Graph, id: ParamId, t: &Tensor| {
            let v = if selected.contains(&id) { graph.param(t.clone()) } else { graph.constant(t.clone()) };
            bound.push((id, v));
            v
        };
        let mut batch_moments = Vec::new();
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = match layer {
                Layer::Dense { weight, bias } => {
                    let w = bind(graph, ParamId::DenseWeight(i), weight);
                    let b = bind(graph, ParamId::DenseBias(i), bias);
                    let xw = graph.matmul(h, w)?;
                    graph.add(xw, b)?
                }
                Layer::Norm(norm) => {
                    let gamma = bind(graph, ParamId::Gamma(i), &norm.gamma);
                    let beta = bind(graph, ParamId::BetaNorm(i), &norm.beta_norm);
                    let xhat = match stats {
                        Stats::Batch => {
                            let mean = graph.mean(h, Axis::Rows)?;
                            let centered = graph.sub(h, mean)?;
                            let sq = graph.mul(centered, centered)?;
                            let var = graph.mean(sq, Axis::Rows)?;
                            let var_eps = graph.shift(var, norm.epsilon)?;
                            let std = graph.sqrt(var_eps)?;
                            let unbias = n as f64 / (n as f64 - 1.0);
                            batch_moments.push((
                                i,
                                graph.value(mean).data().to_vec(),
                                graph.value(var).data().iter().map(|v| v * unbias).collect(),
                            ));
                            graph.div(centered, std)?
                        }
                        Stats::Running => {
                            let mean = graph.constant(norm.running_mean.clone());
                            let std = graph.constant(norm.running_var.map(|v| (v + norm.epsilon).sqrt()));
                            let centered = graph.sub(h, mean)?;
                            graph.div(centered, std)?
                        }
                    };
                    let scaled = graph.mul(xhat, gamma)?;
                    graph.add(scaled, beta)?
                }
                Layer::Relu => graph.relu(h)?,
            };
        }
        let features = h;
        let omega = bind(graph, ParamId::HeadOmega, &self.head.omega);
        let omega_t = graph.transpose(omega)?;
        let mut logits = graph.matmul(features, omega_t)?;
        if let Some(beta) = &self.head.beta {
            let b = bind(graph, ParamId::HeadBias, beta);
            logits = graph.add(logits, b)?;
        }
        Ok(ForwardPass { features, logits, bound, batch_moments })
    }

    /// Plain evaluation: `(features [N, D], logits [N, C])`.
    pub fn forward(&self, x: &Tensor, stats: Stats) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::inference();
        let xv = g.constant(x.clone());
        let pass = self.forward_graph(&mut g, xv, stats, ParamSelector::AffineOnly)?;
        Ok((g.value(pass.features).clone(), g.value(pass.logits).clone()))
    }

    /// Fold batch moments from a training pass into the running statistics:
    /// `running <- (1 - m) running + m batch`.
    pub fn absorb_batch_moments(&mut self, moments: &[(usize, Vec<f64>, Vec<f64>)]) {
        for (idx, mean, var) in moments {
            if let Some(norm) = self.norm_layer_mut(*idx) {
                for (r, b) in norm.running_mean.data_mut().iter_mut().zip(mean) {
                    *r = (1.0 - RUNNING_MOMENTUM) * *r + RUNNING_MOMENTUM * b;
                }
                for (r, b) in norm.running_var.data_mut().iter_mut().zip(var) {
                    *r = (1.0 - RUNNING_MOMENTUM) * *r + RUNNING_MOMENTUM * b;
                }
            }
        }
    }
}
