use std::fmt;
use std::path::Path;

use latticeprop::Error;

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    Args(String),
    File { path: String, message: String },
    Core(Error),
}

impl CliError {
    pub fn file(path: &Path, message: impl fmt::Display) -> CliError {
        CliError::File {
            path: path.display().to_string(),
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Args(_) => 2,
            CliError::File { .. } => 4,
            CliError::Core(e) => match e {
                Error::PlacementFailed { .. } => 3,
                Error::DivergedLoss { .. } => 6,
                Error::ZeroDimension { .. } | Error::NonDivisible { .. } | Error::InvalidArgument(_) => 2,
                _ => 5,
            },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CliError::Args(_) => "InvalidArgument",
            CliError::File { .. } => "FileError",
            CliError::Core(e) => e.name(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Args(m) => f.write_str(m),
            CliError::File { path, message } => write!(f, "{path}: {message}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
