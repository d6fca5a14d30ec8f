use std::path::PathBuf;

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Grid coordinates `(p, q, u)` of a frequency ordinate.
pub type Freq = (i32, i32, i32);

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("input is empty")]
    EmptyInput,

    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),

    #[error("parse error on line {line}, column `{column}`: {message}")]
    Parse {
        line: u64,
        column: String,
        message: String,
    },

    #[error("degenerate window: {0}")]
    DegenerateWindow(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("matrix is singular or ill-conditioned at frequency {freq:?}")]
    Singular { freq: Freq },

    #[error("spectral field is degenerate: {0}")]
    Degenerate(String),

    #[error("symmetry violation: imaginary residue {residue:e} exceeds tolerance {tolerance:e}")]
    Symmetry { residue: f64, tolerance: f64 },

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

    /// Stable machine-readable identifier for error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::EmptyInput => "empty_input",
            Error::MissingColumn(_) => "schema",
            Error::Parse { .. } => "parse",
            Error::DegenerateWindow(_) => "degenerate_window",
            Error::OutOfRange(_) => "out_of_range",
            Error::Parameter(_) => "parameter",
            Error::Domain(_) => "domain",
            Error::Contract(_) => "contract",
            Error::Singular { .. } => "singular",
            Error::Degenerate(_) => "degenerate",
            Error::Symmetry { .. } => "symmetry",
            Error::Json(_) => "json",
        }
    }
}
