//! The synthetic shift benchmark: blobs, a trained source model, and a
//! corrupted copy of the held-out split, all derived from one seed.

use serde::{Deserialize, Serialize};

use crate::adaptation::{train_source, SgdConfig, TrainConfig};
use crate::data::{apply_corruption, gen_blobs, CorruptionKind, CorruptionSpec, DatasetSpec, LabeledData};
use crate::error::Result;
use crate::model::{init_model, Model, ModelSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub n_classes: usize,
    pub feature_dim: usize,
    pub samples_per_class: usize,
    pub cluster_spread: f64,
    /// Output widths of the dense blocks; the input width is `feature_dim`.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub train_sgd: SgdConfig,
    pub train_batch: usize,
    pub corruption: CorruptionKind,
    pub severity: u8,
}

impl Default for Benchmark {
    fn default() -> Self {
        Benchmark {
            n_classes: 10,
            feature_dim: 32,
            samples_per_class: 500,
            cluster_spread: 0.1,
            hidden: vec![64, 64, 64],
            epochs: 10,
            train_sgd: SgdConfig { learning_rate: 0.05, momentum: 0.9, weight_decay: 0.0 },
            train_batch: 64,
            corruption: CorruptionKind::GaussianNoise,
            severity: 5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Prepared {
    pub seed: u64,
    pub source: Model,
    pub train_error: f64,
    pub clean_test: LabeledData,
    pub shifted_test: LabeledData,
}

impl Benchmark {
    pub fn dataset_spec(&self, seed: u64) -> DatasetSpec {
        DatasetSpec {
            n_classes: self.n_classes,
            feature_dim: self.feature_dim,
            samples_per_class: self.samples_per_class,
            cluster_spread: self.cluster_spread,
            seed,
        }
    }

    pub fn model_spec(&self, seed: u64) -> ModelSpec {
        let mut widths = vec![self.feature_dim];
        widths.extend(&self.hidden);
        ModelSpec { widths, classes: self.n_classes, bias: false, seed }
    }

    /// Data, model init, training order and corruption all use `seed`.
    pub fn prepare(&self, seed: u64) -> Result<Prepared> {
        let split = gen_blobs(&self.dataset_spec(seed))?;
        let mut source = init_model(&self.model_spec(seed))?;
        let train = TrainConfig { epochs: self.epochs, sgd: self.train_sgd, batch_size: self.train_batch, seed };
        let summary = train_source(&mut source, &split.train, &train)?;
        let shifted_test =
            apply_corruption(&split.test, &CorruptionSpec { kind: self.corruption, severity: self.severity, seed })?;
        Ok(Prepared { seed, source, train_error: summary.final_train_error, clean_test: split.test, shifted_test })
    }
}
