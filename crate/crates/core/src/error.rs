use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{}:{line}: timestamp {timestamp_ms} does not follow the previous sample ({previous_ms})", path.display())]
    NonMonotonic {
        path: PathBuf,
        line: u64,
        timestamp_ms: i64,
        previous_ms: i64,
    },

    #[error("empty series: {0}")]
    EmptySeries(String),

    #[error("segment [{start_ms}, {end_ms}] ms contains no samples")]
    EmptySegment { start_ms: i64, end_ms: i64 },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("series of {len} samples is shorter than one window of {size}")]
    TooShort { len: usize, size: usize },

    #[error("window {window_index}: {reason}")]
    Window { window_index: usize, reason: String },

    #[error("degenerate training data: {0}")]
    DegenerateTraining(String),

    #[error("dimension mismatch: model expects {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("undefined ROC AUC: {0}")]
    UndefinedAuc(String),

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
