//! Command-line front end: configuration, feature caching, experiment runs
//! and report emission.

pub mod cache;
pub mod commands;
pub mod config;
pub mod model_file;
pub mod plot;

use std::fmt;

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or arguments (exit 1).
    Validation(String),
    /// Unreadable or unusable input data (exit 2).
    Data(String),
    /// Anything else (exit 3).
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid configuration: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<vistim_core::Error> for CliError {
    fn from(e: vistim_core::Error) -> Self {
        fn root(e: &vistim_core::Error) -> &vistim_core::Error {
            match e {
                vistim_core::Error::Cell { source, .. } => root(source),
                other => other,
            }
        }
        match root(&e) {
            vistim_core::Error::Contract(_) => CliError::Internal(e.to_string()),
            vistim_core::Error::Precondition(_) => CliError::Data(e.to_string()),
            _ if e.is_data_error() => CliError::Data(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}
