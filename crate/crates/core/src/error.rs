use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid filter spec: {0}")]
    InvalidSpec(String),
    #[error("invalid signal: {0}")]
    InvalidSignal(String),
    #[error("empty record: {0}")]
    EmptyRecord(String),
    #[error("degenerate window: zero variance")]
    DegenerateWindow,
    #[error("shape error: {0}")]
    Shape(String),
    #[error("batch-norm running statistics are uninitialized")]
    UninitializedStats,
    #[error("non-finite value in {layer} at time step {step}")]
    NumericStep { layer: String, step: usize },
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("ingestion error at row {row}: {message}")]
    Ingestion { row: usize, message: String },
    #[error("non-uniform sampling: {0}")]
    NonUniformSampling(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by bad user input (files, specs, configs, too little data).
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::NumericStep { .. } | Error::NonFiniteGradient(_) | Error::Protocol(_)
        )
    }
}
