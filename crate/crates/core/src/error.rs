use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} out of range: {detail}")]
    OutOfRange { what: &'static str, detail: String },

    #[error("invalid Dirichlet weights: {0}")]
    InvalidWeights(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("non-finite log density in {context} at iteration {iteration}")]
    NonFinite {
        context: String,
        iteration: usize,
        /// Snapshot of the offending state, for diagnosis.
        dump: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("data validation failed: {0}")]
    Validation(String),

    #[error("censoring target {target:.3} unreachable: achievable range is [{low:.3}, {high:.3}]")]
    CensoringUnreachable { target: f64, low: f64, high: f64 },

    #[error("root finding failed: {0}")]
    Root(String),

    #[error("sweep {iteration} failed: {source}")]
    Sweep {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("empty chain history")]
    EmptyHistory,

    #[error("replication study aborted: {failed} of {total} replicates failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error("paired comparison is invalid: {0}")]
    SeedMismatch(String),

    #[error("malformed chain file: {0}")]
    ChainFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn out_of_range(what: &'static str, detail: impl Into<String>) -> Self {
        Error::OutOfRange {
            what,
            detail: detail.into(),
        }
    }
}
