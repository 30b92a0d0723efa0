use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// No closed-form kernel for the requested activation / weight-law pair.
    #[error("capability: {0}")]
    Capability(String),

    /// A finite-size quantity left the range where the asymptotic formulas are defined.
    #[error("numerical stability: {what} (value {value:e})")]
    Stability { what: &'static str, value: f64 },

    #[error(
        "no convergence in {solver} after {iterations} iterations (last residual {residual:e})"
    )]
    Convergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Capability(_) => 2,
            Error::Stability { .. } | Error::Convergence { .. } => 3,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
