use thiserror::Error;

use crate::backend::BackendError;
use crate::worker::WorkerError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration field failed validation.
    #[error("invalid configuration `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("task template error: {0}")]
    Template(String),

    #[error("problem error: {0}")]
    Problem(String),

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error(transparent)]
    Worker(#[from] WorkerError),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by the user's configuration rather than the run itself.
    pub fn is_configuration(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Template(_))
    }
}
