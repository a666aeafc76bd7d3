use std::fmt::Display;
use std::path::Path;

use metric_currents::CurrentError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("current format: {0}")]
    Format(String),

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("unknown plot selector `{0}`")]
    Selector(String),

    #[error(transparent)]
    Core(#[from] CurrentError),

    #[error("{0}")]
    Usage(String),

    #[error("{context}: {inner}")]
    Context { context: String, inner: Box<CliError> },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn context(self, c: impl Display) -> Self {
        CliError::Context {
            context: c.to_string(),
            inner: Box::new(self),
        }
    }

    /// 2 for a failed numeric stage, 1 for usage and parse problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(CurrentError::Stage { .. }) | CliError::Core(CurrentError::NonRegular(_)) => 2,
            CliError::Context { inner, .. } => inner.exit_code(),
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
