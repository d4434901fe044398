use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] lca_core::Error),
}

pub type LabResult<T> = Result<T, LabError>;

impl LabError {
    pub fn config(msg: impl Into<String>) -> Self {
        LabError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        LabError::Format { path: path.into(), reason: reason.into() }
    }

    /// Process exit status: 2 for bad input, 3 for numerical trouble.
    pub fn exit_code(&self) -> i32 {
        use lca_core::Error as E;
        match self {
            LabError::Core(E::NumericFailure { .. } | E::DivergenceSuspected { .. } | E::SingularSystem { .. }) => 3,
            _ => 2,
        }
    }
}
