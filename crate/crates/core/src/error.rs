use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("LASSO solver did not converge after {sweeps} sweeps (last update {last_update:e})")]
    SolverFailure { sweeps: usize, last_update: f64 },

    #[error("least-squares system on support {support:?} is singular")]
    Singular { support: Vec<usize> },

    #[error("integral diverges: {0}")]
    Divergent(String),

    #[error("every sweep point was infeasible")]
    AllInfeasible,

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
