//! Frequency-domain gating for U-Net segmentation.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`], [`fft`], [`tape`]: dense tensors, the orthonormal real 2D
//!   FFT and a reverse-mode tape covering convolution, normalization and
//!   spectral ops.
//! * [`activations`]: complex-valued activations.
//! * [`layers`]: the global filter, the attention filter gate and the
//!   additive attention gate.
//! * [`models`]: the three U-Net variants, parameter accounting and the
//!   checkpoint container.
//! * [`losses`] and [`metrics`]: training objectives and Dice/IoU.

pub mod activations;
pub mod error;
pub mod fft;
pub mod gradcheck;
pub mod layers;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod ops;
pub mod params;
pub mod tape;
pub mod tensor;

pub use error::{Result, TensorError};
pub use tape::{Gradients, SpecVar, Tape, Var};
pub use tensor::{half_width, DType, Scalar, Spectrum, Tensor};
