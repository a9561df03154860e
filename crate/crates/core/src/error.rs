use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the decomposition / forecasting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("ingest error: {0}")]
    Ingest(String),

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("invalid split: {0}")]
    Split(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("rank error: {0}")]
    Rank(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("non-stationary model: max root modulus {lambda_star} >= 1")]
    NonStationary { lambda_star: f64 },

    #[error("characteristic roots are not distinct (min gap {gap:e})")]
    DegenerateRoots { gap: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("state error: {0}")]
    State(String),

    #[error("persistence error: {0}")]
    Persist(String),

    #[error("generator spec error: {0}")]
    Spec(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("grid search failed for all {} configurations", failures.len())]
    Search { failures: Vec<(String, String)> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable, machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Ingest(_) => "IngestError",
            Error::Parse { .. } => "ParseError",
            Error::Split(_) => "SplitError",
            Error::Shape(_) => "ShapeError",
            Error::Index(_) => "IndexError",
            Error::Rank(_) => "RankError",
            Error::Fit(_) => "FitError",
            Error::NonStationary { .. } => "NonStationaryError",
            Error::DegenerateRoots { .. } => "DegenerateRootsError",
            Error::Numerical(_) => "NumericalError",
            Error::State(_) => "StateError",
            Error::Persist(_) => "PersistError",
            Error::Spec(_) => "SpecError",
            Error::Metric(_) => "MetricError",
            Error::Search { .. } => "SearchError",
            Error::Config(_) => "ConfigError",
            Error::Io { .. } => "IoError",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
