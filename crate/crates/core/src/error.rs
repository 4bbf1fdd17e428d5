use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode {path}: {message}")]
    Format { path: PathBuf, message: String },

    /// A caller-side precondition was violated (empty mask, too few samples, ...).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Two values that must agree do not (vector dimensions, label sets, ...).
    #[error("contract violated: {0}")]
    Contract(String),

    /// A split protocol cannot be satisfied by the dataset.
    #[error("protocol error in category `{category}`: {message}")]
    Protocol { category: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    /// Failure inside one (fraction, run) cell of an evaluation sweep.
    #[error("fraction {fraction}, run {run}: {source}")]
    Cell {
        fraction: f64,
        run: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Whether the error was caused by input data rather than by the caller.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Cell { source, .. } => source.is_data_error(),
            other => matches!(
                other,
                Error::Io { .. } | Error::Format { .. } | Error::Protocol { .. } | Error::Parse(_)
            ),
        }
    }
}

pub(crate) fn precondition(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
