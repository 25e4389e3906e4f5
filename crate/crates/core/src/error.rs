use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, JetError>;

#[derive(Debug, Error)]
pub enum JetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: missing field `{field}`")]
    MissingField { line: usize, field: &'static str },

    #[error("{0} is empty")]
    Empty(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("sequence too long: {len} positions exceeds the maximum of {max}")]
    TooLong { len: usize, max: usize },

    #[error("utterance {utterance}: {expected} labels expected, found {found}")]
    LabelCount {
        utterance: usize,
        expected: usize,
        found: usize,
    },

    #[error("token id {id} out of range for vocabulary of size {size}")]
    TokenOutOfRange { id: usize, size: usize },

    #[error("non-finite activation in {block} layer {layer}")]
    NonFinite { block: &'static str, layer: usize },

    #[error("backward called on a tape with no recorded forward pass")]
    NoForward,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("missing prediction for sample `{0}`")]
    MissingPrediction(String),

    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl JetError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        JetError::Io {
            path: path.into(),
            source,
        }
    }
}
