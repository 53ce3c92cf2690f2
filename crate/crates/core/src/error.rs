//! Error type shared by every module of the crate.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("convolution window {window} exceeds sequence length {len}")]
    WindowTooLarge { window: usize, len: usize },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("graph already consumed by a backward pass")]
    GraphConsumed,

    #[error("variable {0} does not belong to this graph")]
    UnknownVar(usize),

    #[error("empty document: {0}")]
    EmptyDocument(String),

    #[error("embedding dimension mismatch at line {line}: expected {expected}, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("need at least {needed} distinct points, found {found}")]
    InsufficientPoints { needed: usize, found: usize },

    #[error("{labels} labels cannot map injectively onto {clusters} clusters")]
    TooManyLabels { labels: usize, clusters: usize },

    #[error("label {0} has no mapped cluster")]
    UnmappedLabel(usize),

    #[error("labeled ratio {ratio} cannot cover all {labels} labels")]
    RatioTooSmall { ratio: f64, labels: usize },

    #[error("corpus contains no valid documents")]
    EmptyCorpus,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }
}
