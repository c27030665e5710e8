use std::path::PathBuf;

use thermsynth_autograd::ShapeError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("image error for {path}: {msg}")]
    Image { path: PathBuf, msg: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    /// Whether the failure stems from user input
    /// rather than from a computation going wrong.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::Validation(_)
                | Error::Argument(_)
                | Error::Checkpoint(_)
                | Error::Config { .. }
                | Error::Image { .. }
        )
    }
}

impl From<ShapeError> for Error {
    fn from(e: ShapeError) -> Self {
        Error::Shape(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
