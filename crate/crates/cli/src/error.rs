use std::fmt;

use watercare_core::pgm::PgmError;
use watercare_core::{FenceError, RunError, ScenarioError};
use watercare_gcs::{LogError, ServerError};

/// Exit statuses: 0 success, 1 validation, 2 I/O, 3 link.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
    Link(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
            CliError::Link(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Link(m) => write!(f, "link failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<PgmError> for CliError {
    fn from(e: PgmError) -> Self {
        match e {
            PgmError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<FenceError> for CliError {
    fn from(e: FenceError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Sim(e) => CliError::Validation(e.to_string()),
            RunError::Link(e) => CliError::Link(e.to_string()),
        }
    }
}

impl From<ServerError> for CliError {
    fn from(e: ServerError) -> Self {
        match e {
            ServerError::Log(LogError::Corrupt { .. }) => CliError::Validation(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

pub fn io_error(what: impl fmt::Display, e: std::io::Error) -> CliError {
    CliError::Io(format!("{what}: {e}"))
}
