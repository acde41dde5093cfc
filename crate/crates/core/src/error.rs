use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("date {date} is before the observation window starting {start}")]
    OutOfObservationWindow {
        date: chrono::NaiveDate,
        start: chrono::NaiveDate,
    },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("integration instability at t = {t:.3} days (compartment {compartment} = {value:e}); reduce step")]
    IntegrationInstability {
        t: f64,
        compartment: &'static str,
        value: f64,
    },

    #[error("trajectory ends at day {available}, but day {requested} was requested")]
    TrajectoryTooShort { requested: f64, available: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite gradient coordinate {index} ({name})")]
    NonFiniteGradient { index: usize, name: String },

    #[error("sampler: {0}")]
    Sampler(String),

    #[error("{path}:{line}: {message}")]
    Ingest {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
