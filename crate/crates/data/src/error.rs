use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed sidecar {path}: {reason}")]
    Sidecar { path: String, reason: String },
    #[error("{what}: expected {expected} bytes, found {actual}")]
    SizeMismatch { what: String, expected: usize, actual: usize },
    #[error("unsupported dtype {0}")]
    UnsupportedDtype(String),
    #[error("mask value {value} at voxel {index} is not 0 or 1")]
    MaskValue { index: usize, value: f64 },
    #[error("shape mismatch: image {image:?}, mask {mask:?}")]
    ShapeMismatch { image: Vec<usize>, mask: Vec<usize> },
    #[error("nifti: {0}")]
    Nifti(String),
    #[error("crop box {top}+{height} x {left}+{width} outside a {frame_h}x{frame_w} frame")]
    OutOfBounds { top: usize, left: usize, height: usize, width: usize, frame_h: usize, frame_w: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl DataError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        DataError::Io { path: path.display().to_string(), source }
    }
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;
