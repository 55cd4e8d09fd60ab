use std::path::PathBuf;

use thiserror::Error;

/// Process exit code for a configuration or I/O setup problem.
pub const EXIT_CONFIG: i32 = 2;
/// Process exit code for a numerical failure inside a run.
pub const EXIT_NUMERICAL: i32 = 3;
/// Process exit code when some scan points failed and the rest were written.
pub const EXIT_PARTIAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CtlError {
    /// Parse or validation failure; the message names the location or key.
    #[error("{0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("numerical failure: {0}")]
    Numerical(conical_core::Error),
}

impl CtlError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CtlError::Config(_) | CtlError::Io { .. } => EXIT_CONFIG,
            CtlError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CtlError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<conical_core::Error> for CtlError {
    fn from(e: conical_core::Error) -> Self {
        use conical_core::Error as E;
        match e {
            E::Config(_) | E::Shape { .. } | E::Range(_) => CtlError::Config(e.to_string()),
            E::Domain(_) | E::Numerical { .. } => CtlError::Numerical(e),
        }
    }
}

pub type Result<T> = std::result::Result<T, CtlError>;
