use std::fmt;
use std::path::Path;

use fnsf_core::Error;

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Usage = 2,
    Io = 3,
    Numeric = 4,
    Budget = 5,
}

#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self {
            exit: Exit::Usage,
            message: msg.into(),
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self {
            exit: Exit::Io,
            message: format!("{}: {err}", path.display()),
        }
    }

    /// Prefixes the message with where it happened.
    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let exit = match &e {
            Error::Io { .. } | Error::Parse { .. } => Exit::Io,
            Error::MemoryBudget { .. } => Exit::Budget,
            Error::NonFinite { .. }
            | Error::NonFiniteLayer { .. }
            | Error::NonFiniteValue(_)
            | Error::Diverged { .. }
            | Error::OutsideGrid { .. } => Exit::Numeric,
            Error::EmptyCloud(_)
            | Error::InvalidArgument(_)
            | Error::LengthMismatch { .. }
            | Error::EmptyOccupancy => Exit::Usage,
        };
        Self {
            exit,
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self {
            exit: Exit::Io,
            message: format!("json: {e}"),
        }
    }
}
