use std::fmt;
use std::path::Path;

use thiserror::Error;

/// Failure classes with fixed exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// A verification property did not hold.
    #[error("{0}")]
    Property(String),
    /// Bad configuration, arguments or input contents.
    #[error("{0}")]
    Config(String),
    /// Reading or writing a file failed.
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Property(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            CliError::Property(_) => "property",
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
        }
    }

    pub fn config(e: impl fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
