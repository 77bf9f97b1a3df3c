//! Versioned JSON checkpoints. Reals are written with 17 significant digits so
//! a save/load round trip reproduces every parameter bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassifierHead, Layer, Model, NormLayer};
use crate::error::{Error, Result};
use crate::format::to_json_sig17;
use crate::numerics::Tensor;

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format_version: String,
    dims: Dims,
    bias_enabled: bool,
    layers: Vec<LayerFile>,
    head: HeadFile,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Dims {
    input: usize,
    hidden: Vec<usize>,
    #[serde(rename = "D")]
    features: usize,
    #[serde(rename = "C")]
    classes: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum LayerFile {
    /// `weight[i][j]` connects input `i` to output `j`.
    Dense { weight: Vec<Vec<f64>>, bias: Vec<f64> },
    Norm {
        epsilon: f64,
        gamma: Vec<f64>,
        beta_norm: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
    },
    Relu,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeadFile {
    omega: Vec<Vec<f64>>,
    beta: Option<Vec<f64>>,
}

fn row_tensor(v: &[f64], what: &str) -> Result<Tensor> {
    Tensor::row(v.to_vec()).map_err(|e| Error::Malformed(format!("{what}: {e}")))
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<Tensor> {
    Tensor::from_rows(rows).map_err(|e| Error::Malformed(format!("{what}: {e}")))
}

impl CheckpointFile {
    fn from_model(model: &Model) -> Self {
        let layers = model
            .layers()
            .iter()
            .map(|l| match l {
                Layer::Dense { weight, bias } => LayerFile::Dense { weight: weight.to_rows(), bias: bias.data().to_vec() },
                Layer::Norm(n) => LayerFile::Norm {
                    epsilon: n.epsilon,
                    gamma: n.gamma.data().to_vec(),
                    beta_norm: n.beta_norm.data().to_vec(),
                    running_mean: n.running_mean.data().to_vec(),
                    running_var: n.running_var.data().to_vec(),
                },
                Layer::Relu => LayerFile::Relu,
            })
            .collect();
        let dense_widths: Vec<usize> = model
            .layers()
            .iter()
            .filter_map(|l| match l {
                Layer::Dense { weight, .. } => Some(weight.cols()),
                _ => None,
            })
            .collect();
        let hidden = dense_widths[..dense_widths.len().saturating_sub(1)].to_vec();
        CheckpointFile {
            format_version: FORMAT_VERSION.to_string(),
            dims: Dims { input: model.input_dim(), hidden, features: model.feature_dim(), classes: model.classes() },
            bias_enabled: model.bias_enabled(),
            layers,
            head: HeadFile { omega: model.head().omega.to_rows(), beta: model.head().beta.as_ref().map(|b| b.data().to_vec()) },
        }
    }

    fn into_model(self) -> Result<Model> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::VersionMismatch { found: self.format_version, expected: FORMAT_VERSION.into() });
        }
        if self.bias_enabled != self.head.beta.is_some() {
            return Err(Error::Malformed("bias_enabled disagrees with head.beta".into()));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.into_iter().enumerate() {
            layers.push(match l {
                LayerFile::Dense { weight, bias } => Layer::Dense {
                    weight: matrix(&weight, &format!("layer {i} weight"))?,
                    bias: row_tensor(&bias, &format!("layer {i} bias"))?,
                },
                LayerFile::Norm { epsilon, gamma, beta_norm, running_mean, running_var } => Layer::Norm(NormLayer {
                    gamma: row_tensor(&gamma, &format!("layer {i} gamma"))?,
                    beta_norm: row_tensor(&beta_norm, &format!("layer {i} beta_norm"))?,
                    running_mean: row_tensor(&running_mean, &format!("layer {i} running_mean"))?,
                    running_var: row_tensor(&running_var, &format!("layer {i} running_var"))?,
                    epsilon,
                }),
                LayerFile::Relu => Layer::Relu,
            });
        }
        let head = ClassifierHead {
            omega: matrix(&self.head.omega, "head omega")?,
            beta: self.head.beta.as_deref().map(|b| row_tensor(b, "head beta")).transpose()?,
        };
        let model = Model::from_parts(self.dims.input, layers, head)?;

        let dense: Vec<usize> = model
            .layers()
            .iter()
            .filter_map(|l| match l {
                Layer::Dense { weight, .. } => Some(weight.cols()),
                _ => None,
            })
            .collect();
        let hidden_ok = dense.len() == self.dims.hidden.len() + 1 && dense[..self.dims.hidden.len()] == self.dims.hidden[..]
            || dense.is_empty() && self.dims.hidden.is_empty();
        if !hidden_ok || self.dims.features != model.feature_dim() || self.dims.classes != model.classes() {
            return Err(Error::Malformed(format!("dims {:?} disagree with the layer shapes", self.dims)));
        }
        Ok(model)
    }
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let bytes = to_json_sig17(&CheckpointFile::from_model(model)).map_err(|e| Error::Malformed(e.to_string()))?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    let bytes = std::fs::read(path)?;
    checkpoint_from_slice(&bytes)
}

pub(crate) fn checkpoint_from_slice(bytes: &[u8]) -> Result<Model> {
    let file: CheckpointFile = serde_json::from_slice(bytes).map_err(|e| Error::Malformed(e.to_string()))?;
    file.into_model()
}
