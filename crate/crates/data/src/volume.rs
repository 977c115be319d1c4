//! Canonical on-disk container.
//!
//! A volume `<id>` is three files in one directory: `<id>.json` (the
//! sidecar), `<id>.img.raw` (little-endian f32) and `<id>.msk.raw` (u8).
//! Voxels are stored with the last axis fastest, so index `(d, h, w)` sits
//! at `(d * H + h) * W + w`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct VolumeRecord {
    pub id: String,
    /// `[D, H, W]`.
    pub dims: [usize; 3],
    /// Voxel size in millimetres, same axis order as `dims`.
    pub spacing: [f64; 3],
    pub image: Vec<f32>,
    pub mask: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub id: String,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub dtype: String,
    pub mask_dtype: String,
    pub byte_order: String,
}

/// One 2D cut through a volume.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub height: usize,
    pub width: usize,
    pub image: Vec<f32>,
    pub mask: Vec<u8>,
}

impl VolumeRecord {
    pub fn new(id: &str, dims: [usize; 3], spacing: [f64; 3], image: Vec<f32>, mask: Vec<u8>) -> Result<Self> {
        let v = VolumeRecord { id: id.to_string(), dims, spacing, image, mask };
        v.validate()?;
        Ok(v)
    }

    pub fn voxels(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.voxels();
        if self.image.len() != n || self.mask.len() != n {
            return Err(DataError::ShapeMismatch { image: vec![self.image.len()], mask: vec![self.mask.len()] });
        }
        if let Some(i) = self.mask.iter().position(|&m| m > 1) {
            return Err(DataError::MaskValue { index: i, value: self.mask[i] as f64 });
        }
        if self.id.is_empty() || self.id.contains(['/', '\\']) {
            return Err(DataError::Config(format!("volume id {:?} is not a plain file stem", self.id)));
        }
        Ok(())
    }

    pub fn foreground_voxels(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }

    /// Number of planes along `axis`.
    pub fn planes(&self, axis: usize) -> usize {
        self.dims[axis]
    }

    /// The plane at `index` along `axis`; the two remaining axes keep their
    /// order.
    pub fn plane(&self, axis: usize, index: usize) -> Plane {
        let [d, h, w] = self.dims;
        let (height, width) = match axis {
            0 => (h, w),
            1 => (d, w),
            _ => (d, h),
        };
        let at = |r: usize, c: usize| match axis {
            0 => (index * h + r) * w + c,
            1 => (r * h + index) * w + c,
            _ => (r * h + c) * w + index,
        };
        let mut image = Vec::with_capacity(height * width);
        let mut mask = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                let k = at(r, c);
                image.push(self.image[k]);
                mask.push(self.mask[k]);
            }
        }
        Plane { height, width, image, mask }
    }

    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            id: self.id.clone(),
            dims: self.dims,
            spacing: self.spacing,
            dtype: "f32".into(),
            mask_dtype: "u8".into(),
            byte_order: "little".into(),
        }
    }

    /// Writes the three container files into `dir` and returns the sidecar
    /// path.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        self.validate()?;
        fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
        let (json, img, msk) = container_paths(dir, &self.id);
        let text = serde_json::to_string_pretty(&self.sidecar()).expect("sidecar serializes");
        fs::write(&json, text).map_err(|e| DataError::io(&json, e))?;
        let bytes: Vec<u8> = self.image.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(&img, bytes).map_err(|e| DataError::io(&img, e))?;
        fs::write(&msk, &self.mask).map_err(|e| DataError::io(&msk, e))?;
        Ok(json)
    }
}

/// `(sidecar, image payload, mask payload)` for a volume id.
pub fn container_paths(dir: &Path, id: &str) -> (PathBuf, PathBuf, PathBuf) {
    (dir.join(format!("{id}.json")), dir.join(format!("{id}.img.raw")), dir.join(format!("{id}.msk.raw")))
}

/// Reads a volume given the path of its sidecar.
pub fn load_volume(sidecar: &Path) -> Result<VolumeRecord> {
    let text = fs::read_to_string(sidecar).map_err(|e| DataError::io(sidecar, e))?;
    let meta: Sidecar = serde_json::from_str(&text)
        .map_err(|e| DataError::Sidecar { path: sidecar.display().to_string(), reason: e.to_string() })?;
    if meta.dtype != "f32" {
        return Err(DataError::UnsupportedDtype(meta.dtype));
    }
    if meta.mask_dtype != "u8" {
        return Err(DataError::UnsupportedDtype(meta.mask_dtype));
    }
    if meta.byte_order != "little" {
        return Err(DataError::Sidecar {
            path: sidecar.display().to_string(),
            reason: format!("byte order {:?} is not supported", meta.byte_order),
        });
    }
    let dir = sidecar.parent().unwrap_or(Path::new("."));
    let (_, img_path, msk_path) = container_paths(dir, &meta.id);
    let n: usize = meta.dims.iter().product();

    let raw = fs::read(&img_path).map_err(|e| DataError::io(&img_path, e))?;
    if raw.len() != 4 * n {
        return Err(DataError::SizeMismatch {
            what: img_path.display().to_string(),
            expected: 4 * n,
            actual: raw.len(),
        });
    }
    let image = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
    let mask = fs::read(&msk_path).map_err(|e| DataError::io(&msk_path, e))?;
    if mask.len() != n {
        return Err(DataError::SizeMismatch { what: msk_path.display().to_string(), expected: n, actual: mask.len() });
    }
    VolumeRecord::new(&meta.id, meta.dims, meta.spacing, image, mask)
}

/// Loads `<dir>/<id>.json` for each id, in order.
pub fn load_volumes(dir: &Path, ids: &[String]) -> Result<Vec<VolumeRecord>> {
    ids.iter().map(|id| load_volume(&container_paths(dir, id).0)).collect()
}
