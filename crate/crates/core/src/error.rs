use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurrentError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("arity mismatch: expected {expected} inputs, got {got}")]
    ArityMismatch { expected: usize, got: usize },

    #[error("expression evaluation failed: {0}")]
    Domain(String),

    #[error("parse error at offset {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("index {index} out of range for ambient dimension {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("non-regular base point: {0}")]
    NonRegular(String),

    #[error("{stage} failed: {msg}")]
    Stage { stage: String, msg: String },
}

impl CurrentError {
    pub fn stage(stage: impl Into<String>, msg: impl Into<String>) -> Self {
        CurrentError::Stage {
            stage: stage.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CurrentError>;
