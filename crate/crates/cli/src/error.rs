use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or an invalid configuration.
    #[error("{0}")]
    Usage(String),
    /// Unreadable, malformed or inconsistent input.
    #[error("{0}")]
    Data(String),
    /// A numerical failure during scoring or simulation.
    #[error("{0}")]
    Numeric(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) | CliError::Io { .. } => EXIT_DATA,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

impl From<gidag::Error> for CliError {
    fn from(e: gidag::Error) -> Self {
        use gidag::Error as E;
        match e {
            E::Numeric(_) => CliError::Numeric(e.to_string()),
            E::Hyperparameter(_) | E::Capacity { .. } | E::InvalidScope(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
