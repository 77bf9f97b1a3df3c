use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("log of non-positive input {value} at flat index {index}")]
    LogDomain { index: usize, value: f64 },

    #[error("arccos input {value} outside [-1, 1]")]
    ArccosDomain { value: f64 },

    #[error("backward needs a scalar output, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("graph is empty")]
    EmptyGraph,

    #[error("invalid {what}: {detail}")]
    Invalid { what: &'static str, detail: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("checkpoint format version {found:?} is not supported (expected {expected:?})")]
    VersionMismatch { found: String, expected: String },

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("degenerate feature rows (norm < 1e-9) at sample indices {rows:?}")]
    DegenerateFeatures { rows: Vec<usize> },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("line {line}: {detail}")]
    Csv { line: u64, detail: String },

    #[error("non-finite training loss at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("batch {index}")]
    Batch {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Invalid { what, detail: detail.into() }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch { op, detail: detail.into() }
    }

    /// True for failures of the numerics (non-finite loss or gradient, domain
    /// errors, degenerate features) as opposed to bad input or I/O.
    pub fn is_numeric_failure(&self) -> bool {
        match self {
            Error::NonFinite(_)
            | Error::LogDomain { .. }
            | Error::ArccosDomain { .. }
            | Error::DegenerateFeatures { .. }
            | Error::Divergence { .. } => true,
            Error::Batch { source, .. } => source.is_numeric_failure(),
            _ => false,
        }
    }
}
