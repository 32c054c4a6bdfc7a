//! groundgen-cli: file formats, configuration, the external-grounder wire
//! protocol, buffer persistence, and the `groundgen` command-line surface.
//!
//! All algorithmic work lives in `groundgen-core`; this crate only moves
//! bytes. Failure classes map to distinct exit codes so scripts can react:
//! config 2, data/parse 3, adapter 4, other IO 5.

pub mod adapter;
pub mod commands;
pub mod config;
pub mod formats;
pub mod persist;

/// CLI-level failure, classified for exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Parse(String),
    #[error("adapter error: {0}")]
    Adapter(String),
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Parse(_) => 3,
            CliError::Adapter(_) => 4,
            CliError::Io(_) => 5,
        }
    }

    pub fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn parse(e: impl std::fmt::Display) -> Self {
        CliError::Parse(e.to_string())
    }

    pub fn io(e: impl std::fmt::Display) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
