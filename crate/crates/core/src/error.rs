use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error in {func}: {detail}")]
    Domain { func: &'static str, detail: String },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{what} needs {needed} entries, exceeding the configured cap of {cap}")]
    CapExceeded {
        what: &'static str,
        needed: u128,
        cap: u64,
    },

    #[error("truncated chain is not irreducible: {0}")]
    Reducible(String),

    #[error("{method} did not converge within {iterations} iterations (last change {last_change:e})")]
    NoConvergence {
        method: &'static str,
        iterations: usize,
        last_change: f64,
    },

    #[error("stationary residual {residual:e} exceeds the bound {bound:e}")]
    Residual { residual: f64, bound: f64 },

    #[error("occupation measure is empty (no time was recorded)")]
    EmptyMeasure,

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed input {path}: {detail}")]
    Format { path: PathBuf, detail: String },
}

impl Error {
    pub(crate) fn domain(func: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            func,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for problems with the user's input (files, flags, parameter values)
    /// as opposed to numerical-validity failures discovered while computing.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidParams(_) | Error::Io { .. } | Error::Json(_) | Error::Csv(_) | Error::Format { .. }
        )
    }
}
