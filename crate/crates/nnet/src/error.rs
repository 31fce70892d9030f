use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("tensor shape {shape:?} requires {expected} values, got {found}")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        found: usize,
    },

    #[error("tensor shape {0:?} has a zero or missing dimension")]
    EmptyShape(Vec<usize>),

    #[error("invalid layer spec at index {index}: {message}")]
    InvalidSpec { index: usize, message: String },

    #[error("layer {index} ({kind}): {message}")]
    LayerShape {
        index: usize,
        kind: &'static str,
        message: String,
    },

    #[error("input shape {found:?} does not match network input shape {expected:?}")]
    InputShape { expected: Vec<usize>, found: Vec<usize> },

    #[error("backward called without a cached training-mode forward pass")]
    NoCachedForward,

    #[error("shape mismatch: {0}")]
    Mismatch(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;
