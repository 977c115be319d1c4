//! Volume to training slices: extract, crop, resize, standardize.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::slices::{auto_box, crop_roi, resize, znormalize, SliceSample, Transform};
use crate::volume::VolumeRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Axis the slices are cut along; 0 is axial.
    pub axis: usize,
    /// Empty slices kept per labelled slice, taken nearest the labelled
    /// range first.
    pub empty_ratio: f64,
    /// Crop to the volume's mask bounding box grown by `margin`. When off
    /// the full frame is kept.
    pub auto_box: bool,
    pub margin: usize,
    pub target_size: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig { axis: 0, empty_ratio: 0.2, auto_box: true, margin: 16, target_size: 64 }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.axis > 2 {
            return Err(DataError::Config(format!("slice axis {} is not 0, 1 or 2", self.axis)));
        }
        if !(self.empty_ratio >= 0.0 && self.empty_ratio.is_finite()) {
            return Err(DataError::Config(format!("empty_ratio {} must be non-negative", self.empty_ratio)));
        }
        if self.target_size < 1 {
            return Err(DataError::Config("target_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Slices cut from one volume, and a note when none qualified.
#[derive(Clone, Debug, PartialEq)]
pub struct Extraction {
    pub samples: Vec<SliceSample>,
    pub warning: Option<String>,
}

/// Labelled slices plus `round(ratio · labelled)` empty neighbours, ordered
/// by slice index.
pub fn extract_label_slices(v: &VolumeRecord, axis: usize, empty_ratio: f64) -> Extraction {
    let n = v.planes(axis);
    let planes: Vec<_> = (0..n).map(|i| SliceSample::from_volume(v, axis, i)).collect();
    let labelled: Vec<usize> = (0..n).filter(|&i| planes[i].foreground() > 0).collect();
    if labelled.is_empty() {
        return Extraction { samples: Vec::new(), warning: Some(format!("volume {} has an empty mask", v.id)) };
    }
    let want = (empty_ratio * labelled.len() as f64).round() as usize;
    let distance = |i: usize| labelled.iter().map(|&j| i.abs_diff(j)).min().unwrap_or(usize::MAX);
    let mut empty: Vec<usize> = (0..n).filter(|i| planes[*i].foreground() == 0).collect();
    empty.sort_by_key(|&i| (distance(i), i));
    let keep: BTreeSet<usize> = labelled.iter().copied().chain(empty.into_iter().take(want)).collect();
    let samples = planes.into_iter().enumerate().filter(|(i, _)| keep.contains(i)).map(|(_, s)| s).collect();
    Extraction { samples, warning: None }
}

/// Union of the volume's masks projected onto the slice plane.
pub fn union_mask(v: &VolumeRecord, axis: usize) -> (Vec<u8>, usize, usize) {
    let first = v.plane(axis, 0);
    let mut acc = vec![0u8; first.height * first.width];
    for i in 0..v.planes(axis) {
        for (a, m) in acc.iter_mut().zip(v.plane(axis, i).mask) {
            *a |= m;
        }
    }
    (acc, first.height, first.width)
}

/// Slices ready for training, and any notes (empty masks, clamped boxes).
#[derive(Clone, Debug, PartialEq)]
pub struct Preprocessed {
    pub samples: Vec<SliceSample>,
    pub notes: Vec<String>,
}

pub fn preprocess_volume(v: &VolumeRecord, cfg: &PreprocessConfig) -> Result<Preprocessed> {
    cfg.validate()?;
    let mut notes = Vec::new();
    let ex = extract_label_slices(v, cfg.axis, cfg.empty_ratio);
    notes.extend(ex.warning);
    if ex.samples.is_empty() {
        return Ok(Preprocessed { samples: Vec::new(), notes });
    }
    let (union, h, w) = union_mask(v, cfg.axis);
    let (rect, clamped) = if cfg.auto_box {
        auto_box(&union, h, w, cfg.margin)
    } else {
        (crate::slices::CropBox { top: 0, left: 0, height: h, width: w }, false)
    };
    if clamped {
        notes.push(format!(
            "volume {}: margin {} clamped to frame, box {}x{} at ({}, {})",
            v.id, cfg.margin, rect.height, rect.width, rect.top, rect.left
        ));
    }
    let samples = ex
        .samples
        .iter()
        .map(|s| {
            let s = crop_roi(s, rect, clamped)?;
            let s = resize(&s, cfg.target_size)?;
            Ok(znormalize(&s))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Preprocessed { samples, notes })
}

/// Preprocesses every volume on a pool of `workers` threads. The output is
/// sorted by `(volume_id, slice_index)`, so it does not depend on the pool
/// size.
pub fn preprocess_dataset(volumes: &[VolumeRecord], cfg: &PreprocessConfig, workers: usize) -> Result<Preprocessed> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| DataError::Config(format!("worker pool: {e}")))?;
    let parts: Vec<Result<Preprocessed>> =
        pool.install(|| volumes.par_iter().map(|v| preprocess_volume(v, cfg)).collect());
    let mut samples = Vec::new();
    let mut notes = Vec::new();
    for p in parts {
        let p = p?;
        samples.extend(p.samples);
        notes.extend(p.notes);
    }
    samples.sort_by(|a, b| (&a.volume_id, a.slice_index).cmp(&(&b.volume_id, b.slice_index)));
    Ok(Preprocessed { samples, notes })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct PackEntry {
    volume_id: String,
    slice_index: usize,
    height: usize,
    width: usize,
    transform_log: Vec<Transform>,
    constant_input: bool,
}

/// Paths of a slice pack: index JSON, f32 images, u8 masks.
pub fn pack_paths(dir: &Path, name: &str) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join(format!("{name}.slices.json")),
        dir.join(format!("{name}.slices.img.raw")),
        dir.join(format!("{name}.slices.msk.raw")),
    )
}

/// Writes samples as a slice pack; pixels are concatenated in order.
pub fn save_slices(dir: &Path, name: &str, samples: &[SliceSample]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let (index, img, msk) = pack_paths(dir, name);
    let entries: Vec<PackEntry> = samples
        .iter()
        .map(|s| PackEntry {
            volume_id: s.volume_id.clone(),
            slice_index: s.slice_index,
            height: s.height,
            width: s.width,
            transform_log: s.transform_log.clone(),
            constant_input: s.constant_input,
        })
        .collect();
    fs::write(&index, serde_json::to_string_pretty(&entries).expect("entries serialize"))
        .map_err(|e| DataError::io(&index, e))?;
    let pixels: Vec<u8> = samples.iter().flat_map(|s| s.image.iter().flat_map(|v| v.to_le_bytes())).collect();
    fs::write(&img, pixels).map_err(|e| DataError::io(&img, e))?;
    let masks: Vec<u8> = samples.iter().flat_map(|s| s.mask.iter().copied()).collect();
    fs::write(&msk, masks).map_err(|e| DataError::io(&msk, e))?;
    Ok(index)
}

pub fn load_slices(dir: &Path, name: &str) -> Result<Vec<SliceSample>> {
    let (index, img, msk) = pack_paths(dir, name);
    let text = fs::read_to_string(&index).map_err(|e| DataError::io(&index, e))?;
    let entries: Vec<PackEntry> = serde_json::from_str(&text)
        .map_err(|e| DataError::Sidecar { path: index.display().to_string(), reason: e.to_string() })?;
    let pixels = fs::read(&img).map_err(|e| DataError::io(&img, e))?;
    let masks = fs::read(&msk).map_err(|e| DataError::io(&msk, e))?;
    let total: usize = entries.iter().map(|e| e.height * e.width).sum();
    if pixels.len() != 4 * total {
        return Err(DataError::SizeMismatch {
            what: img.display().to_string(),
            expected: 4 * total,
            actual: pixels.len(),
        });
    }
    if masks.len() != total {
        return Err(DataError::SizeMismatch { what: msk.display().to_string(), expected: total, actual: masks.len() });
    }
    let mut at = 0;
    entries
        .into_iter()
        .map(|e| {
            let n = e.height * e.width;
            let image = pixels[4 * at..4 * (at + n)]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            let mask = masks[at..at + n].to_vec();
            at += n;
            let s = SliceSample {
                volume_id: e.volume_id,
                slice_index: e.slice_index,
                height: e.height,
                width: e.width,
                image,
                mask,
                transform_log: e.transform_log,
                constant_input: e.constant_input,
            };
            s.validate()?;
            Ok(s)
        })
        .collect()
}
