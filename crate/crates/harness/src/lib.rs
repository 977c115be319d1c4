//! Training and evaluation harness for the frequency-gated U-Net family.
//!
//! [`train`] runs the optimization loop and writes checkpoints, [`report`]
//! scores predictions, [`bench`], [`spectrum`] and [`saliency`] are the
//! diagnostics, and [`cli`] wires everything to the `fgunet` binary.

pub mod batch;
pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod optim;
pub mod report;
pub mod saliency;
pub mod spectrum;
pub mod train;

pub use config::{OptimizerKind, TrainConfig};
pub use error::{HarnessError, Result};
pub use report::{evaluate, MetricReport};
pub use train::{train, TrainData, Trainer};
