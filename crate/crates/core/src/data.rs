//! Synthetic labeled data, covariate-shift corruptions, streams, and CSV I/O.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Minimum pairwise angle between blob centroids, in degrees.
pub const MIN_CENTROID_ANGLE_DEG: f64 = 60.0;
const CENTROID_ATTEMPTS: usize = 10_000;
pub const MAX_SEVERITY: u8 = 5;

/// Row-major features with integer labels. May be empty.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledData {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    n_classes: usize,
}

impl LabeledData {
    pub fn new(features: Vec<f64>, dim: usize, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if dim == 0 || n_classes == 0 {
            return Err(Error::invalid("dataset", "dimension and class count must be positive"));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::shape(
                "dataset",
                format!("{} values for {} rows of width {dim}", features.len(), labels.len()),
            ));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("dataset feature at row {}", i / dim)));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::invalid("dataset", format!("label {y} outside [0, {n_classes})")));
        }
        Ok(LabeledData { features, dim, labels, n_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Features as an `N x dim` tensor.
    pub fn x(&self) -> Result<Tensor> {
        if self.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Tensor::matrix(self.len(), self.dim, self.features.clone())
    }

    pub fn select(&self, indices: &[usize]) -> LabeledData {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        LabeledData {
            features,
            dim: self.dim,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Population standard deviation over every feature value.
    pub fn feature_std(&self) -> f64 {
        if self.features.is_empty() {
            return 0.0;
        }
        let n = self.features.len() as f64;
        let mean = self.features.iter().sum::<f64>() / n;
        (self.features.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n_classes: usize,
    pub feature_dim: usize,
    pub samples_per_class: usize,
    pub cluster_spread: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: LabeledData,
    pub test: LabeledData,
}

impl Split {
    pub fn total(&self) -> usize {
        self.train.len() + self.test.len()
    }
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Unit-sphere centroids with pairwise angle at least [`MIN_CENTROID_ANGLE_DEG`].
pub fn blob_centroids(n_classes: usize, dim: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let max_cos = MIN_CENTROID_ANGLE_DEG.to_radians().cos();
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(n_classes);
    while centroids.len() < n_classes {
        let found = (0..CENTROID_ATTEMPTS).map(|_| unit_gaussian(rng, dim)).find(|cand| {
            centroids.iter().all(|c| c.iter().zip(cand).map(|(a, b)| a * b).sum::<f64>() <= max_cos)
        });
        match found {
            Some(c) => centroids.push(c),
            None => {
                return Err(Error::invalid(
                    "dataset spec",
                    format!(
                        "cannot place {n_classes} centroids {MIN_CENTROID_ANGLE_DEG} degrees apart in dimension {dim}"
                    ),
                ))
            }
        }
    }
    Ok(centroids)
}

/// Gaussian clusters around separated unit-sphere centroids, split 80/20 per class.
pub fn gen_blobs(spec: &DatasetSpec) -> Result<Split> {
    if spec.n_classes < 2 || spec.samples_per_class == 0 || spec.feature_dim == 0 {
        return Err(Error::invalid("dataset spec", "need C >= 2, dim >= 1 and at least one sample per class"));
    }
    if !spec.cluster_spread.is_finite() || spec.cluster_spread < 0.0 {
        return Err(Error::invalid("dataset spec", format!("spread {} must be finite and >= 0", spec.cluster_spread)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centroids = blob_centroids(spec.n_classes, spec.feature_dim, &mut rng)?;
    let m = spec.samples_per_class;
    let n_train = m * 4 / 5;
    let mut features = Vec::with_capacity(spec.n_classes * m * spec.feature_dim);
    let mut labels = Vec::with_capacity(spec.n_classes * m);
    let (mut train_idx, mut test_idx) = (Vec::new(), Vec::new());
    for (c, centroid) in centroids.iter().enumerate() {
        let start = labels.len();
        for _ in 0..m {
            for &mu in centroid {
                let noise: f64 = rng.sample(StandardNormal);
                features.push(mu + spec.cluster_spread * noise);
            }
            labels.push(c);
        }
        let mut idx: Vec<usize> = (start..start + m).collect();
        idx.shuffle(&mut rng);
        let (tr, te) = idx.split_at(n_train);
        let (mut tr, mut te) = (tr.to_vec(), te.to_vec());
        tr.sort_unstable();
        te.sort_unstable();
        train_idx.extend(tr);
        test_idx.extend(te);
    }
    let all = LabeledData::new(features, spec.feature_dim, labels, spec.n_classes)?;
    Ok(Split { train: all.select(&train_idx), test: all.select(&test_idx) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptionKind {
    /// Additive isotropic noise, sigma = magnitude x feature std.
    GaussianNoise,
    /// Multiply every feature by the magnitude.
    FeatureScale,
    /// Rotate disjoint random coordinate pairs by the magnitude in degrees.
    Rotation,
    /// Add magnitude x feature std times a random sign vector.
    MeanShift,
    /// Zero each value independently with probability = magnitude.
    FeatureDropout,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 5] = [
        CorruptionKind::GaussianNoise,
        CorruptionKind::FeatureScale,
        CorruptionKind::Rotation,
        CorruptionKind::MeanShift,
        CorruptionKind::FeatureDropout,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorruptionKind::GaussianNoise => "gaussian-noise",
            CorruptionKind::FeatureScale => "feature-scale",
            CorruptionKind::Rotation => "rotation",
            CorruptionKind::MeanShift => "mean-shift",
            CorruptionKind::FeatureDropout => "feature-dropout",
        }
    }
}

impl std::str::FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CorruptionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid("corruption", format!("unknown kind {s:?}")))
    }
}

impl std::fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub severity: u8,
    pub seed: u64,
}

/// Magnitude per severity level 0..=5 for each corruption kind.
#[derive(Clone, Debug, PartialEq)]
pub struct SeverityTable {
    table: BTreeMap<CorruptionKind, [f64; 6]>,
}

impl SeverityTable {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, Vec<f64>> =
            serde_json::from_str(text).map_err(|e| Error::Malformed(format!("severity table: {e}")))?;
        let mut table = BTreeMap::new();
        for (name, mags) in raw {
            let kind: CorruptionKind = name.parse()?;
            let mags: [f64; 6] = mags
                .try_into()
                .map_err(|v: Vec<f64>| Error::Malformed(format!("{name}: expected 6 magnitudes, got {}", v.len())))?;
            if mags.iter().any(|m| !m.is_finite()) || mags.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Malformed(format!("{name}: magnitudes must be finite and strictly increasing")));
            }
            table.insert(kind, mags);
        }
        if let Some(k) = CorruptionKind::ALL.into_iter().find(|k| !table.contains_key(k)) {
            return Err(Error::Malformed(format!("severity table lacks {k}")));
        }
        Ok(SeverityTable { table })
    }

    /// The checked-in table from `config/severity.json`.
    pub fn builtin() -> &'static SeverityTable {
        static TABLE: OnceLock<SeverityTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            SeverityTable::from_json(include_str!("../config/severity.json")).expect("bundled severity table is valid")
        })
    }

    pub fn magnitude(&self, kind: CorruptionKind, severity: u8) -> Result<f64> {
        if severity > MAX_SEVERITY {
            return Err(Error::invalid("severity", format!("{severity} outside 0..=5")));
        }
        Ok(self.table[&kind][severity as usize])
    }
}

pub fn apply_corruption(data: &LabeledData, spec: &CorruptionSpec) -> Result<LabeledData> {
    apply_corruption_with(data, spec, SeverityTable::builtin())
}

pub fn apply_corruption_with(data: &LabeledData, spec: &CorruptionSpec, table: &SeverityTable) -> Result<LabeledData> {
    let mag = table.magnitude(spec.kind, spec.severity)?;
    if spec.severity == 0 {
        return Ok(data.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = data.dim;
    let std = data.feature_std();
    let mut out = data.features.clone();
    match spec.kind {
        CorruptionKind::GaussianNoise => {
            for v in &mut out {
                let n: f64 = rng.sample(StandardNormal);
                *v += mag * std * n;
            }
        }
        CorruptionKind::FeatureScale => out.iter_mut().for_each(|v| *v *= mag),
        CorruptionKind::Rotation => {
            let mut axes: Vec<usize> = (0..d).collect();
            axes.shuffle(&mut rng);
            let (s, c) = mag.to_radians().sin_cos();
            for row in out.chunks_mut(d) {
                for pair in axes.chunks_exact(2) {
                    let (a, b) = (row[pair[0]], row[pair[1]]);
                    row[pair[0]] = c * a - s * b;
                    row[pair[1]] = s * a + c * b;
                }
            }
        }
        CorruptionKind::MeanShift => {
            let signs: Vec<f64> = (0..d).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            for row in out.chunks_mut(d) {
                row.iter_mut().zip(&signs).for_each(|(v, s)| *v += mag * std * s);
            }
        }
        CorruptionKind::FeatureDropout => {
            for v in &mut out {
                if rng.random::<f64>() < mag {
                    *v = 0.0;
                }
            }
        }
    }
    LabeledData::new(out, d, data.labels.clone(), data.n_classes)
}

/// A stream mini-batch. Labels are private and only reachable through
/// [`StreamBatch::count_errors`], which records every read.
#[derive(Debug)]
pub struct StreamBatch {
    x: Tensor,
    labels: Vec<usize>,
    label_reads: AtomicUsize,
}

impl Clone for StreamBatch {
    fn clone(&self) -> Self {
        StreamBatch { x: self.x.clone(), labels: self.labels.clone(), label_reads: AtomicUsize::new(0) }
    }
}

impl StreamBatch {
    pub fn new(x: Tensor, labels: Vec<usize>) -> Result<Self> {
        if x.rows() != labels.len() {
            return Err(Error::shape("stream batch", format!("{} rows, {} labels", x.rows(), labels.len())));
        }
        Ok(StreamBatch { x, labels, label_reads: AtomicUsize::new(0) })
    }

    pub fn x(&self) -> &Tensor {
        &self.x
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of predictions that disagree with the hidden labels.
    pub fn count_errors(&self, predictions: &[usize]) -> Result<usize> {
        if predictions.len() != self.labels.len() {
            return Err(Error::shape("scoring", format!("{} predictions for {} samples", predictions.len(), self.len())));
        }
        self.label_reads.fetch_add(1, Ordering::Relaxed);
        Ok(predictions.iter().zip(&self.labels).filter(|(p, y)| p != y).count())
    }

    /// How many times the hidden labels were consulted.
    pub fn label_reads(&self) -> usize {
        self.label_reads.load(Ordering::Relaxed)
    }
}

#[derive(Clone, Debug)]
pub struct Stream {
    pub batches: Vec<StreamBatch>,
    /// Sample indices in the trailing batch discarded because it held one sample.
    pub dropped: Vec<usize>,
    /// Dataset indices of every batch, in stream order.
    pub order: Vec<Vec<usize>>,
}

/// One shuffled pass over `data`. With `drop_singleton_tail`, a final batch
/// of a single sample is dropped and recorded in [`Stream::dropped`].
pub fn make_stream(data: &LabeledData, batch_size: usize, seed: u64, drop_singleton_tail: bool) -> Result<Stream> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch size", "must be at least 1"));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut order: Vec<Vec<usize>> = idx.chunks(batch_size).map(<[usize]>::to_vec).collect();
    let mut dropped = Vec::new();
    if drop_singleton_tail && order.last().is_some_and(|b| b.len() < 2) {
        dropped = order.pop().unwrap_or_default();
    }
    let batches = order
        .iter()
        .map(|b| {
            let part = data.select(b);
            StreamBatch::new(part.x()?, part.labels)
        })
        .collect::<Result<_>>()?;
    Ok(Stream { batches, dropped, order })
}

/// Expected CSV layout beyond the fixed `label,f0,...` header.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CsvSchema {
    /// Class count; inferred as `max label + 1` when absent.
    pub n_classes: Option<usize>,
    /// Feature width; taken from the header when absent.
    pub dim: Option<usize>,
}

pub fn write_csv_dataset(data: &LabeledData, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    let mut header = vec!["label".to_string()];
    header.extend((0..data.dim).map(|j| format!("f{j}")));
    w.write_record(&header).map_err(csv_io)?;
    for i in 0..data.len() {
        let mut rec = vec![data.labels[i].to_string()];
        rec.extend(data.row(i).iter().map(|v| format!("{v:?}")));
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Malformed(format!("{other:?}")),
    }
}

pub fn load_csv_dataset(path: impl AsRef<Path>, schema: CsvSchema) -> Result<LabeledData> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(csv_io)?;
    let header = r.headers().map_err(|e| Error::Csv { line: 1, detail: e.to_string() })?.clone();
    if header.get(0) != Some("label") || header.len() < 2 {
        return Err(Error::Csv { line: 1, detail: "header must be label,f0,f1,...".into() });
    }
    let dim = header.len() - 1;
    if let Some(expected) = schema.dim {
        if expected != dim {
            return Err(Error::Csv { line: 1, detail: format!("expected {expected} feature columns, found {dim}") });
        }
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Csv { line, detail: e.to_string() }
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let label: usize = rec[0]
            .trim()
            .parse()
            .map_err(|_| Error::Csv { line, detail: format!("label {:?} is not a non-negative integer", &rec[0]) })?;
        if let Some(c) = schema.n_classes {
            if label >= c {
                return Err(Error::Csv { line, detail: format!("label {label} outside [0, {c})") });
            }
        }
        for (j, field) in rec.iter().skip(1).enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Csv { line, detail: format!("column f{j}: {field:?} is not a number") })?;
            if !v.is_finite() {
                return Err(Error::Csv { line, detail: format!("column f{j}: non-finite value") });
            }
            features.push(v);
        }
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n_classes = schema.n_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    LabeledData::new(features, dim, labels, n_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(seed: u64) -> DatasetSpec {
        DatasetSpec { n_classes: 10, feature_dim: 32, samples_per_class: 500, cluster_spread: 0.2, seed }
    }

    #[test]
    fn blob_counts_and_determinism() {
        let a = gen_blobs(&spec(3)).unwrap();
        assert_eq!(a.total(), 5000);
        assert_eq!(a.train.len(), 4000);
        let counts: Vec<usize> =
            a.train.class_counts().iter().zip(a.test.class_counts()).map(|(x, y)| x + y).collect();
        assert_eq!(counts, vec![500; 10]);
        assert_eq!(a.test.class_counts(), vec![100; 10]);
        assert_eq!(a, gen_blobs(&spec(3)).unwrap());
        assert_ne!(a, gen_blobs(&spec(4)).unwrap());
    }

    #[test]
    fn infeasible_separation() {
        let s = DatasetSpec { n_classes: 10, feature_dim: 2, samples_per_class: 5, cluster_spread: 0.1, seed: 0 };
        assert!(matches!(gen_blobs(&s), Err(Error::Invalid { .. })));
    }

    #[test]
    fn centroids_are_separated() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cs = blob_centroids(10, 8, &mut rng).unwrap();
        for i in 0..cs.len() {
            for j in 0..i {
                let dot: f64 = cs[i].iter().zip(&cs[j]).map(|(a, b)| a * b).sum();
                assert!(dot <= 0.5 + 1e-12);
            }
        }
    }

    #[test]
    fn severity_zero_is_identity() {
        let d = gen_blobs(&spec(1)).unwrap().test;
        for kind in CorruptionKind::ALL {
            let out = apply_corruption(&d, &CorruptionSpec { kind, severity: 0, seed: 5 }).unwrap();
            assert_eq!(out, d);
        }
    }

    #[test]
    fn corruption_preserves_labels_and_is_deterministic() {
        let d = gen_blobs(&spec(1)).unwrap().test;
        for kind in CorruptionKind::ALL {
            let s = CorruptionSpec { kind, severity: 3, seed: 5 };
            let a = apply_corruption(&d, &s).unwrap();
            assert_eq!(a.labels(), d.labels());
            assert_eq!(a, apply_corruption(&d, &s).unwrap());
            assert_ne!(a.features(), d.features());
        }
    }

    #[test]
    fn severity_out_of_range() {
        let d = gen_blobs(&spec(1)).unwrap().test;
        let s = CorruptionSpec { kind: CorruptionKind::Rotation, severity: 6, seed: 0 };
        assert!(apply_corruption(&d, &s).is_err());
        assert!("blur".parse::<CorruptionKind>().is_err());
    }

    #[test]
    fn builtin_table_is_strictly_increasing() {
        let t = SeverityTable::builtin();
        for kind in CorruptionKind::ALL {
            let m: Vec<f64> = (0..=5).map(|s| t.magnitude(kind, s).unwrap()).collect();
            assert!(m.windows(2).all(|w| w[1] > w[0]), "{kind}");
        }
        assert_eq!(t.magnitude(CorruptionKind::GaussianNoise, 5).unwrap(), 2.0);
        assert!(SeverityTable::from_json(r#"{"gaussian-noise": [0, 0.2, 0.2, 0.3, 0.4, 0.5]}"#).is_err());
    }

    #[test]
    fn stream_arithmetic() {
        let d = LabeledData::new((0..1000).map(f64::from).collect(), 1, vec![0; 1000], 1).unwrap();
        let s = make_stream(&d, 128, 7, true).unwrap();
        let sizes: Vec<usize> = s.batches.iter().map(StreamBatch::len).collect();
        assert_eq!(sizes, [vec![128; 7], vec![104]].concat());
        assert!(s.dropped.is_empty());
        let again = make_stream(&d, 128, 7, true).unwrap();
        assert_eq!(s.order, again.order);
    }

    #[test]
    fn singleton_tail_dropped_only_when_asked() {
        let d = LabeledData::new((0..9).map(f64::from).collect(), 1, vec![0; 9], 1).unwrap();
        assert_eq!(make_stream(&d, 4, 0, true).unwrap().batches.len(), 2);
        assert_eq!(make_stream(&d, 4, 0, true).unwrap().dropped.len(), 1);
        assert_eq!(make_stream(&d, 4, 0, false).unwrap().batches.len(), 3);
    }

    #[test]
    fn empty_stream_rejected() {
        let d = LabeledData::new(vec![], 3, vec![], 2).unwrap();
        assert!(matches!(make_stream(&d, 4, 0, true), Err(Error::EmptyDataset)));
        assert!(matches!(d.x(), Err(Error::EmptyDataset)));
    }

    #[test]
    fn label_reads_are_counted() {
        let b = StreamBatch::new(Tensor::identity(2), vec![0, 1]).unwrap();
        assert_eq!(b.label_reads(), 0);
        assert_eq!(b.count_errors(&[1, 1]).unwrap(), 1);
        assert_eq!(b.label_reads(), 1);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let d = gen_blobs(&DatasetSpec { n_classes: 3, feature_dim: 4, samples_per_class: 5, cluster_spread: 0.3, seed: 2 })
            .unwrap()
            .train;
        let p = dir.path().join("d.csv");
        write_csv_dataset(&d, &p).unwrap();
        let back = load_csv_dataset(&p, CsvSchema { n_classes: Some(3), dim: Some(4) }).unwrap();
        assert_eq!(back, d);

        std::fs::write(&p, "label,f0,f1\n0,1.0,2.0\n1,abc,3.0\n").unwrap();
        match load_csv_dataset(&p, CsvSchema::default()) {
            Err(Error::Csv { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        std::fs::write(&p, "label,f0,f1\n").unwrap();
        assert!(matches!(load_csv_dataset(&p, CsvSchema::default()), Err(Error::EmptyDataset)));
        std::fs::write(&p, "label,f0\n4,1.0\n").unwrap();
        assert!(matches!(load_csv_dataset(&p, CsvSchema { n_classes: Some(3), dim: None }), Err(Error::Csv { line: 2, .. })));
    }
}
