use thiserror::Error;

/// Errors produced by tensor math, model construction, data generation and training.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: left {lhs:?} vs right {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("softmax row {row} is entirely masked (all -inf); result would be 0/0")]
    FullyMaskedRow { row: usize },

    #[error("loss must be a scalar (1 element), got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("label {label} out of range for {classes} classes (frame {frame})")]
    LabelOutOfRange {
        label: usize,
        classes: usize,
        frame: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Format {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
