use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("rank {0} exceeds the supported maximum of 4")]
    RankTooLarge(usize),
    #[error("expected rank {expected}, got shape {shape:?}")]
    Rank { expected: usize, shape: Vec<usize> },
    #[error("data length {actual} does not match shape (expected {expected})")]
    DataLength { expected: usize, actual: usize },
    #[error("half-spectrum width {width} inconsistent with source width {source_width}")]
    HalfSpectrum { width: usize, source_width: usize },
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: String },
    #[error("kernel {kernel:?} larger than padded input {input:?}")]
    KernelTooLarge { kernel: (usize, usize), input: (usize, usize) },
    #[error("backward already ran on this tape; record a fresh forward pass")]
    BackwardTwice,
    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("probabilities at pixel {pixel} sum to {sum}, not 1")]
    NotNormalized { pixel: usize, sum: f64 },
    #[error("target value {value} at index {index} is not a valid label")]
    InvalidTarget { index: usize, value: f64 },
    #[error("degenerate gate: spectral variance is zero for sample {sample}, channel {channel}")]
    DegenerateVariance { sample: usize, channel: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("{0}")]
    Invalid(String),
}

impl From<std::io::Error> for TensorError {
    fn from(e: std::io::Error) -> Self {
        TensorError::Io(e.to_string())
    }
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;
