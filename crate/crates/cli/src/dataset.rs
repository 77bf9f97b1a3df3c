use std::path::Path;

use anyhow::{bail, Context, Result};
use otta_lab::data::{gen_blobs, load_csv_dataset, CsvSchema, DatasetSpec, LabeledData};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Test,
    All,
}

/// `blobs:C=10,d=32,m=500,spread=0.1,seed=1`; omitted keys take the
/// defaults below and `seed` falls back to the global seed.
pub fn parse_blobs(spec: &str, default_seed: u64) -> Result<Option<DatasetSpec>> {
    let Some(rest) = spec.strip_prefix("blobs:").or_else(|| (spec == "blobs").then_some("")) else {
        return Ok(None);
    };
    let mut out =
        DatasetSpec { n_classes: 10, feature_dim: 32, samples_per_class: 500, cluster_spread: 0.1, seed: default_seed };
    for part in rest.split(',').filter(|p| !p.is_empty()) {
        let (key, value) = part.split_once('=').with_context(|| format!("--dataset: `{part}` is not key=value"))?;
        let bad = || format!("--dataset: bad value for `{key}`: {value}");
        match key.trim() {
            "C" => out.n_classes = value.parse().with_context(bad)?,
            "d" => out.feature_dim = value.parse().with_context(bad)?,
            "m" => out.samples_per_class = value.parse().with_context(bad)?,
            "spread" => out.cluster_spread = value.parse().with_context(bad)?,
            "seed" => out.seed = value.parse().with_context(bad)?,
            other => bail!("--dataset: unknown key `{other}` (expected C, d, m, spread, seed)"),
        }
    }
    Ok(Some(out))
}

/// Synthetic blobs (then `split`) or a CSV file (used whole).
pub fn load(spec: &str, split: Split, default_seed: u64, schema: CsvSchema) -> Result<LabeledData> {
    if let Some(blobs) = parse_blobs(spec, default_seed)? {
        let s = gen_blobs(&blobs)?;
        return Ok(match split {
            Split::Train => s.train,
            Split::Test => s.test,
            Split::All => {
                let mut features = s.train.features().to_vec();
                features.extend_from_slice(s.test.features());
                let mut labels = s.train.labels().to_vec();
                labels.extend_from_slice(s.test.labels());
                LabeledData::new(features, s.train.dim(), labels, s.train.n_classes())?
            }
        });
    }
    let path = Path::new(spec);
    if !path.exists() {
        bail!("--dataset: `{spec}` is neither a blobs spec nor an existing CSV file");
    }
    Ok(load_csv_dataset(path, schema)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_spec_parsing() {
        let s = parse_blobs("blobs:C=3,d=4,m=20,spread=0.25,seed=9", 1).unwrap().unwrap();
        assert_eq!((s.n_classes, s.feature_dim, s.samples_per_class, s.seed), (3, 4, 20, 9));
        assert_eq!(s.cluster_spread, 0.25);
        assert_eq!(parse_blobs("blobs:C=3", 7).unwrap().unwrap().seed, 7);
        assert!(parse_blobs("data.csv", 0).unwrap().is_none());
        assert!(parse_blobs("blobs:k=3", 0).is_err());
        assert!(parse_blobs("blobs:C=x", 0).is_err());
    }
}
