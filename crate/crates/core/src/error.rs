use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("unsupported convolution width {0}: only odd widths are supported")]
    UnsupportedWidth(usize),

    #[error("empty sequence in {0}: every position is masked")]
    EmptySequence(&'static str),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("invalid dropout rate {0}: must lie in [0, 1)")]
    InvalidRate(f64),

    #[error("class index {index} out of range for {classes} classes")]
    ClassIndex { index: usize, classes: usize },

    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("empty sentence")]
    EmptySentence,

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("sequence length {len} exceeds the encoder maximum {max}")]
    TooLong { len: usize, max: usize },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("need at least 2 runs for a standard deviation, got {0}")]
    InsufficientRuns(usize),

    #[error("need at least {need} models, got {got}")]
    NotEnoughModels { need: usize, got: usize },

    #[error("{0}")]
    Invalid(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
