//! Data side of the segmentation pipeline.
//!
//! Volumes live in a small canonical container ([`volume`]); NIfTI-1 files
//! are converted into it by [`nifti`]. [`pipeline`] turns a volume into
//! standardized 2D slices, [`augment`] perturbs them and [`synth`] generates
//! seeded ellipsoid volumes for desk-scale training.

pub mod augment;
pub mod dataset;
pub mod error;
pub mod nifti;
pub mod pipeline;
pub mod slices;
pub mod synth;
pub mod volume;

pub use augment::{augment, AugmentConfig};
pub use dataset::DatasetManifest;
pub use error::{DataError, Result};
pub use nifti::import_nifti;
pub use pipeline::{extract_label_slices, preprocess_dataset, preprocess_volume, PreprocessConfig, Preprocessed};
pub use slices::{crop_roi, replay, resize, znormalize, CropBox, SliceSample, Transform};
pub use synth::{synth_dataset, synth_volume, SynthConfig};
pub use volume::{load_volume, VolumeRecord};
