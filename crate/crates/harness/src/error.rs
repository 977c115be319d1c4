use freqgate_core::TensorError;
use freqgate_data::DataError;
use thiserror::Error;

/// Process exit codes of the command line.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(#[from] DataError),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("model error: {0}")]
    Model(TensorError),
    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },
}

impl HarnessError {
    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        HarnessError::Io { path: path.display().to_string(), reason: e.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => EXIT_CONFIG,
            HarnessError::Data(_) | HarnessError::Io { .. } => EXIT_DATA,
            HarnessError::Numeric(_) => EXIT_NUMERIC,
            HarnessError::Model(e) => match e {
                TensorError::NonFinite { .. } | TensorError::DegenerateVariance { .. } => EXIT_NUMERIC,
                TensorError::Io(_) => EXIT_DATA,
                _ => EXIT_CONFIG,
            },
        }
    }
}

impl From<TensorError> for HarnessError {
    fn from(e: TensorError) -> Self {
        match e {
            TensorError::NonFinite { .. } | TensorError::DegenerateVariance { .. } => {
                HarnessError::Numeric(e.to_string())
            }
            other => HarnessError::Model(other),
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
