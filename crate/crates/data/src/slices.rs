//! 2D samples and the per-slice preprocessing steps.
//!
//! Every step appends a [`Transform`] to the sample's log. The log holds the
//! resolved parameters (the crop box actually used, the sampled rotation
//! angle, the seed of an elastic field), so [`replay`] reproduces a sample
//! from its raw slice bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::volume::VolumeRecord;

/// Standard deviations below this are treated as a constant slice.
pub const CONSTANT_STD: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceSample {
    pub volume_id: String,
    pub slice_index: usize,
    pub height: usize,
    pub width: usize,
    pub image: Vec<f32>,
    pub mask: Vec<u8>,
    pub transform_log: Vec<Transform>,
    /// Set by [`znormalize`] when the slice had no spread.
    pub constant_input: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropBox {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Transform {
    Crop {
        #[serde(flatten)]
        rect: CropBox,
        /// The requested margin ran past the frame and was cut back.
        clamped: bool,
    },
    Resize {
        height: usize,
        width: usize,
    },
    ZNormalize {
        mean: f64,
        std: f64,
        constant: bool,
    },
    Rotate {
        degrees: f64,
    },
    Scale {
        factor: f64,
    },
    Elastic {
        alpha: f64,
        sigma: f64,
        field_seed: u64,
    },
}

impl SliceSample {
    pub fn new(
        volume_id: &str,
        slice_index: usize,
        height: usize,
        width: usize,
        image: Vec<f32>,
        mask: Vec<u8>,
    ) -> Result<Self> {
        let s = SliceSample {
            volume_id: volume_id.to_string(),
            slice_index,
            height,
            width,
            image,
            mask,
            transform_log: Vec::new(),
            constant_input: false,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.height * self.width;
        if self.image.len() != n || self.mask.len() != n {
            return Err(DataError::ShapeMismatch { image: vec![self.image.len()], mask: vec![self.mask.len()] });
        }
        if let Some(i) = self.mask.iter().position(|&m| m > 1) {
            return Err(DataError::MaskValue { index: i, value: self.mask[i] as f64 });
        }
        Ok(())
    }

    pub fn foreground(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }

    /// The raw slice a sample came from, with an empty log.
    pub fn from_volume(v: &VolumeRecord, axis: usize, index: usize) -> Self {
        let p = v.plane(axis, index);
        SliceSample {
            volume_id: v.id.clone(),
            slice_index: index,
            height: p.height,
            width: p.width,
            image: p.image,
            mask: p.mask,
            transform_log: Vec::new(),
            constant_input: false,
        }
    }

    fn with(&self, height: usize, width: usize, image: Vec<f32>, mask: Vec<u8>, t: Transform) -> Self {
        let mut log = self.transform_log.clone();
        log.push(t);
        SliceSample {
            volume_id: self.volume_id.clone(),
            slice_index: self.slice_index,
            height,
            width,
            image,
            mask,
            transform_log: log,
            constant_input: self.constant_input,
        }
    }
}

/// Tight bounding box of `mask` grown by `margin` on every side. The second
/// value reports whether the grown box had to be clamped to the frame. An
/// empty mask yields the full frame.
pub fn auto_box(mask: &[u8], height: usize, width: usize, margin: usize) -> (CropBox, bool) {
    let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
    for r in 0..height {
        for c in 0..width {
            if mask[r * width + c] != 0 {
                r0 = r0.min(r);
                r1 = r1.max(r);
                c0 = c0.min(c);
                c1 = c1.max(c);
            }
        }
    }
    if r0 == usize::MAX {
        return (CropBox { top: 0, left: 0, height, width }, false);
    }
    let clamped = r0 < margin || c0 < margin || r1 + margin >= height || c1 + margin >= width;
    let top = r0.saturating_sub(margin);
    let left = c0.saturating_sub(margin);
    let bottom = (r1 + margin).min(height - 1);
    let right = (c1 + margin).min(width - 1);
    (CropBox { top, left, height: bottom - top + 1, width: right - left + 1 }, clamped)
}

pub fn crop_roi(s: &SliceSample, rect: CropBox, clamped: bool) -> Result<SliceSample> {
    if rect.height == 0 || rect.width == 0 || rect.top + rect.height > s.height || rect.left + rect.width > s.width {
        return Err(DataError::OutOfBounds {
            top: rect.top,
            left: rect.left,
            height: rect.height,
            width: rect.width,
            frame_h: s.height,
            frame_w: s.width,
        });
    }
    let mut image = Vec::with_capacity(rect.height * rect.width);
    let mut mask = Vec::with_capacity(rect.height * rect.width);
    for r in rect.top..rect.top + rect.height {
        let row = r * s.width + rect.left;
        image.extend_from_slice(&s.image[row..row + rect.width]);
        mask.extend_from_slice(&s.mask[row..row + rect.width]);
    }
    Ok(s.with(rect.height, rect.width, image, mask, Transform::Crop { rect, clamped }))
}

/// Bilinear sample with edge clamping. Coordinates are pixel centres.
pub fn bilinear(img: &[f32], h: usize, w: usize, y: f64, x: f64) -> f32 {
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    let at = |r: usize, c: usize| img[r * w + c] as f64;
    let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
    let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
    (top * (1.0 - fy) + bottom * fy) as f32
}

/// Resizes to `target × target` with half-pixel centres: bilinear for the
/// image, nearest for the mask.
pub fn resize(s: &SliceSample, target: usize) -> Result<SliceSample> {
    if target < 1 {
        return Err(DataError::Config("resize target must be at least 1".into()));
    }
    let (h, w) = (s.height, s.width);
    let sy = h as f64 / target as f64;
    let sx = w as f64 / target as f64;
    let mut image = Vec::with_capacity(target * target);
    let mut mask = Vec::with_capacity(target * target);
    for r in 0..target {
        let fy = (r as f64 + 0.5) * sy;
        let ny = (fy.floor() as usize).min(h - 1);
        for c in 0..target {
            let fx = (c as f64 + 0.5) * sx;
            image.push(bilinear(&s.image, h, w, fy - 0.5, fx - 0.5));
            mask.push(s.mask[ny * w + (fx.floor() as usize).min(w - 1)]);
        }
    }
    Ok(s.with(target, target, image, mask, Transform::Resize { height: target, width: target }))
}

/// Per-slice standardization with population statistics.
pub fn znormalize(s: &SliceSample) -> SliceSample {
    let n = s.image.len() as f64;
    let mean = s.image.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = s.image.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let constant = !(std >= CONSTANT_STD);
    let image = if constant {
        vec![0.0; s.image.len()]
    } else {
        s.image.iter().map(|&v| ((v as f64 - mean) / std) as f32).collect()
    };
    let mut out = s.with(s.height, s.width, image, s.mask.clone(), Transform::ZNormalize { mean, std, constant });
    out.constant_input = constant;
    out
}

/// Resamples image and mask through an inverse map from output to source
/// coordinates. The image clamps at the border; mask pixels that map outside
/// the frame become background.
fn warp(s: &SliceSample, t: Transform, map: impl Fn(usize, usize) -> (f64, f64)) -> SliceSample {
    let (h, w) = (s.height, s.width);
    let mut image = Vec::with_capacity(h * w);
    let mut mask = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let (y, x) = map(r, c);
            image.push(bilinear(&s.image, h, w, y, x));
            let (ny, nx) = (y.round(), x.round());
            let inside = ny >= 0.0 && nx >= 0.0 && ny <= (h - 1) as f64 && nx <= (w - 1) as f64;
            mask.push(if inside { s.mask[ny as usize * w + nx as usize] } else { 0 });
        }
    }
    s.with(h, w, image, mask, t)
}

fn centre(s: &SliceSample) -> (f64, f64) {
    ((s.height as f64 - 1.0) / 2.0, (s.width as f64 - 1.0) / 2.0)
}

/// Rotates about the frame centre: content at offset `(dy, dx)` moves to
/// `(cos·dy − sin·dx, sin·dy + cos·dx)`.
pub fn rotate(s: &SliceSample, degrees: f64) -> SliceSample {
    let (cy, cx) = centre(s);
    let (sin, cos) = degrees.to_radians().sin_cos();
    warp(s, Transform::Rotate { degrees }, |r, c| {
        let (dy, dx) = (r as f64 - cy, c as f64 - cx);
        // Inverse rotation of the output offset.
        (cy + cos * dy + sin * dx, cx - sin * dy + cos * dx)
    })
}

/// Zooms about the frame centre; factors above one enlarge the content.
pub fn scale(s: &SliceSample, factor: f64) -> SliceSample {
    let (cy, cx) = centre(s);
    warp(s, Transform::Scale { factor }, |r, c| (cy + (r as f64 - cy) / factor, cx + (c as f64 - cx) / factor))
}

/// Normalized 1D Gaussian taps for `sigma`, radius `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(0.0) as i64;
    let taps: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable Gaussian blur with clamped borders.
pub fn gaussian_smooth(field: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return field.to_vec();
    }
    let k = gaussian_kernel(sigma);
    let radius = (k.len() / 2) as isize;
    let clampi = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut rows = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            rows[r * w + c] =
                k.iter().enumerate().map(|(j, t)| t * field[r * w + clampi(c as isize + j as isize - radius, w)]).sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] =
                k.iter().enumerate().map(|(j, t)| t * rows[clampi(r as isize + j as isize - radius, h) * w + c]).sum();
        }
    }
    out
}

/// Displacement field `(dy, dx)`: uniform noise in `[-1, 1]`, Gaussian
/// smoothed, times `alpha`. Fully determined by `field_seed`.
pub fn elastic_field(h: usize, w: usize, alpha: f64, sigma: f64, field_seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(field_seed);
    let u = Uniform::new_inclusive(-1.0, 1.0);
    let dy: Vec<f64> = (0..h * w).map(|_| u.sample(&mut rng)).collect();
    let dx: Vec<f64> = (0..h * w).map(|_| u.sample(&mut rng)).collect();
    let scale = |v: Vec<f64>| gaussian_smooth(&v, h, w, sigma).into_iter().map(|d| alpha * d).collect();
    (scale(dy), scale(dx))
}

pub fn elastic(s: &SliceSample, alpha: f64, sigma: f64, field_seed: u64) -> SliceSample {
    let (dy, dx) = elastic_field(s.height, s.width, alpha, sigma, field_seed);
    let w = s.width;
    warp(s, Transform::Elastic { alpha, sigma, field_seed }, |r, c| {
        (r as f64 + dy[r * w + c], c as f64 + dx[r * w + c])
    })
}

/// Applies one logged transform.
pub fn apply(s: &SliceSample, t: &Transform) -> Result<SliceSample> {
    Ok(match *t {
        Transform::Crop { rect, clamped } => crop_roi(s, rect, clamped)?,
        Transform::Resize { height, width } => {
            if height != width {
                return Err(DataError::Config(format!("non-square resize {height}x{width}")));
            }
            resize(s, height)?
        }
        Transform::ZNormalize { .. } => znormalize(s),
        Transform::Rotate { degrees } => rotate(s, degrees),
        Transform::Scale { factor } => scale(s, factor),
        Transform::Elastic { alpha, sigma, field_seed } => elastic(s, alpha, sigma, field_seed),
    })
}

/// Re-runs `log` on a raw slice.
pub fn replay(raw: &SliceSample, log: &[Transform]) -> Result<SliceSample> {
    log.iter().try_fold(raw.clone(), |s, t| apply(&s, t))
}

/// Foreground centroid `(row, col)`, or `None` for an empty mask.
pub fn mask_centroid(mask: &[u8], width: usize) -> Option<(f64, f64)> {
    let (mut n, mut sy, mut sx) = (0usize, 0.0, 0.0);
    for (i, &m) in mask.iter().enumerate() {
        if m != 0 {
            n += 1;
            sy += (i / width) as f64;
            sx += (i % width) as f64;
        }
    }
    (n > 0).then(|| (sy / n as f64, sx / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(h: usize, w: usize) -> SliceSample {
        let image = (0..h * w).map(|i| (i as f32 * 0.37).sin()).collect();
        let mask = (0..h * w).map(|i| ((i / w) % 3 == 0) as u8).collect();
        SliceSample::new("v", 0, h, w, image, mask).unwrap()
    }

    #[test]
    fn full_frame_crop_is_identity() {
        let s = sample(6, 5);
        let out = crop_roi(&s, CropBox { top: 0, left: 0, height: 6, width: 5 }, false).unwrap();
        assert_eq!((out.image.as_slice(), out.mask.as_slice()), (s.image.as_slice(), s.mask.as_slice()));
        assert_eq!(out.transform_log.len(), 1);
    }

    #[test]
    fn crop_rejects_out_of_bounds() {
        let s = sample(6, 5);
        let err = crop_roi(&s, CropBox { top: 3, left: 0, height: 4, width: 5 }, false).unwrap_err();
        assert!(matches!(err, DataError::OutOfBounds { .. }));
    }

    #[test]
    fn auto_box_tight_and_clamped() {
        let (h, w) = (12, 10);
        let mut mask = vec![0u8; h * w];
        for r in 4..=7 {
            for c in 2..=5 {
                mask[r * w + c] = 1;
            }
        }
        let (b, clamped) = auto_box(&mask, h, w, 0);
        assert_eq!(b, CropBox { top: 4, left: 2, height: 4, width: 4 });
        assert!(!clamped);
        let (b, clamped) = auto_box(&mask, h, w, 16);
        assert_eq!(b, CropBox { top: 0, left: 0, height: h, width: w });
        assert!(clamped);
        assert_eq!(auto_box(&vec![0; h * w], h, w, 3).0, CropBox { top: 0, left: 0, height: h, width: w });
    }

    #[test]
    fn resize_to_own_size_is_identity() {
        let s = sample(7, 7);
        let out = resize(&s, 7).unwrap();
        let diff = out.image.iter().zip(&s.image).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        assert!(diff < 1e-6);
        assert_eq!(out.mask, s.mask);
        assert!(resize(&s, 0).is_err());
    }

    #[test]
    fn gaussian_kernel_sums_to_one() {
        let k = gaussian_kernel(4.0);
        assert_eq!(k.len(), 25);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_angle_rotation_and_unit_scale_are_identity() {
        let s = sample(9, 8);
        assert_eq!(rotate(&s, 0.0).image, s.image);
        assert_eq!(scale(&s, 1.0).mask, s.mask);
    }
}
