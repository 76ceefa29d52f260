use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("missing value at row {row}, column {column} ({label})")]
    MissingValue {
        row: usize,
        column: usize,
        label: String,
    },

    #[error("cannot parse {value:?} at row {row}, column {column} ({label}) as a finite number")]
    Parse {
        row: usize,
        column: usize,
        label: String,
        value: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{matrix} is numerically singular (smallest eigenvalue {smallest:.3e}, largest {largest:.3e})")]
    Conditioning {
        matrix: String,
        smallest: f64,
        largest: f64,
    },

    #[error("rank deficient {what}: smallest singular value {smallest:.3e} vs largest {largest:.3e}")]
    RankDeficient {
        what: String,
        smallest: f64,
        largest: f64,
    },

    #[error("identification failed: {0}; run the identification check to pick another normalization")]
    Identification(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("critical value table: {0}")]
    Table(String),

    #[error("{failed} of {total} replications failed numerically (first failure: {first})")]
    Replications {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by ill-conditioned or singular matrices.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Conditioning { .. }
                | Error::RankDeficient { .. }
                | Error::Identification(_)
                | Error::Replications { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
