use std::io;

use thiserror::Error;

use crate::format::FormatError;

/// Command failure, mapped onto the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Corrupt(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Corrupt(_) => 3,
        }
    }

    /// Treats any core error as a problem with the arguments.
    pub fn usage(e: chaosnet_core::Error) -> CliError {
        CliError::Usage(e.to_string())
    }
}

impl From<chaosnet_core::Error> for CliError {
    fn from(e: chaosnet_core::Error) -> Self {
        use chaosnet_core::Error as E;
        match e {
            E::Domain(_) | E::Shape(_) => CliError::Usage(e.to_string()),
            E::Layer { ref source, .. } if matches!(**source, E::Shape(_) | E::Domain(_)) => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Io(e) => e.into(),
            FormatError::Corrupt(m) => CliError::Corrupt(m),
            FormatError::Core(e) => CliError::Corrupt(e.to_string()),
        }
    }
}
