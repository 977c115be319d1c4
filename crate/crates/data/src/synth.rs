//! Seeded synthetic volumes: one ellipsoid "atrium" per volume.
//!
//! The ellipsoid has a random in-plane orientation. Its half-extent along
//! the slice axis is `n + 0.5` around an integer centre, so the outermost
//! labelled slices still cut a sizeable ellipse instead of a few pixels. The
//! image is a smooth background texture, plus a bright offset inside the
//! mask, plus Gaussian noise.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::volume::VolumeRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub depth: usize,
    pub size: usize,
    /// Target ellipsoid volume as a fraction of the grid.
    pub fraction_range: (f64, f64),
    /// Intensity offset inside the ellipsoid.
    pub contrast: f64,
    pub texture_amplitude: f64,
    pub noise_std: f64,
    pub spacing: [f64; 3],
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            depth: 16,
            size: 64,
            fraction_range: (0.02, 0.10),
            contrast: 1.0,
            texture_amplitude: 0.3,
            noise_std: 0.1,
            spacing: [2.5, 1.0, 1.0],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 8 || self.size < 16 {
            return Err(DataError::Config(format!(
                "synthetic grid {}x{}x{} is too small (need depth >= 8, size >= 16)",
                self.depth, self.size, self.size
            )));
        }
        let (lo, hi) = self.fraction_range;
        if !(lo > 0.0 && lo <= hi && hi <= 0.2) {
            return Err(DataError::Config(format!("fraction range ({lo}, {hi}) must satisfy 0 < lo <= hi <= 0.2")));
        }
        if !(self.noise_std >= 0.0 && self.texture_amplitude >= 0.0 && self.contrast.is_finite()) {
            return Err(DataError::Config("noise, texture and contrast must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// The ground-truth shape behind one synthetic volume.
#[derive(Clone, Debug, PartialEq)]
pub struct Ellipsoid {
    /// `(z, y, x)` in voxels.
    pub centre: (f64, f64, f64),
    /// Semi-axes `(along z, in-plane major, in-plane minor)`.
    pub axes: (f64, f64, f64),
    /// In-plane orientation in radians.
    pub angle: f64,
}

impl Ellipsoid {
    pub fn contains(&self, z: f64, y: f64, x: f64) -> bool {
        let (dz, dy, dx) = (z - self.centre.0, y - self.centre.1, x - self.centre.2);
        let (s, c) = self.angle.sin_cos();
        let u = c * dy + s * dx;
        let v = -s * dy + c * dx;
        (dz / self.axes.0).powi(2) + (u / self.axes.1).powi(2) + (v / self.axes.2).powi(2) <= 1.0
    }
}

pub fn volume_id(index: usize) -> String {
    format!("synth{index:04}")
}

fn sample_ellipsoid(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Ellipsoid {
    let (d, n) = (cfg.depth as f64, cfg.size as f64);
    let max_half_depth = ((cfg.depth - 3) / 2).clamp(2, 5);
    let nz = rng.gen_range(2..=max_half_depth);
    let az = nz as f64 + 0.5;
    let fraction = rng.gen_range(cfg.fraction_range.0..=cfg.fraction_range.1);
    // Volume of the ellipsoid is 4/3·π·az·a·b.
    let product = fraction * d * n * n * 3.0 / (4.0 * PI * az);
    let ratio = rng.gen_range(1.0..1.5);
    let limit = n / 2.0 - 3.0;
    let b = (product / ratio).sqrt().min(limit / ratio).max(2.0);
    let a = (ratio * b).min(limit);
    let angle = rng.gen_range(0.0..PI);
    let (s, c) = angle.sin_cos();
    let ey = ((a * c).powi(2) + (b * s).powi(2)).sqrt();
    let ex = ((a * s).powi(2) + (b * c).powi(2)).sqrt();
    let cz = rng.gen_range(nz + 1..=cfg.depth - nz - 2) as f64;
    let mut span = |e: f64| {
        let lo = e + 1.0;
        let hi = n - 2.0 - e;
        if hi > lo {
            rng.gen_range(lo..hi)
        } else {
            (n - 1.0) / 2.0
        }
    };
    let cy = span(ey);
    let cx = span(ex);
    Ellipsoid { centre: (cz, cy, cx), axes: (az, a, b), angle }
}

/// Generates the volume with index `index` of the dataset seeded by `seed`,
/// together with its ellipsoid.
pub fn synth_volume(index: usize, seed: u64, cfg: &SynthConfig) -> Result<(VolumeRecord, Ellipsoid)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let shape = sample_ellipsoid(cfg, &mut rng);

    // A few low-frequency plane waves make the background texture.
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (rng.gen_range(0.5..3.0), rng.gen_range(0.0..PI), rng.gen_range(0.0..2.0 * PI), rng.gen_range(-0.3..0.3))
        })
        .collect();
    let noise = Normal::new(0.0, cfg.noise_std.max(f64::MIN_POSITIVE)).expect("valid std");
    let (d, n) = (cfg.depth, cfg.size);
    let mut image = Vec::with_capacity(d * n * n);
    let mut mask = Vec::with_capacity(d * n * n);
    for z in 0..d {
        for y in 0..n {
            for x in 0..n {
                let (fy, fx) = (y as f64 / n as f64, x as f64 / n as f64);
                let texture: f64 = waves
                    .iter()
                    .map(|&(k, dir, phase, tilt)| {
                        let t = fy * dir.cos() + fx * dir.sin();
                        (2.0 * PI * k * t + phase + tilt * z as f64).sin()
                    })
                    .sum::<f64>()
                    / waves.len() as f64;
                let inside = shape.contains(z as f64, y as f64, x as f64);
                let eps = if cfg.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                let v = cfg.texture_amplitude * texture + if inside { cfg.contrast } else { 0.0 } + eps;
                image.push(v as f32);
                mask.push(inside as u8);
            }
        }
    }
    let rec = VolumeRecord::new(&volume_id(index), [d, n, n], cfg.spacing, image, mask)?;
    Ok((rec, shape))
}

/// `n_volumes` volumes; volume `i` depends only on `(seed, i)`.
pub fn synth_dataset(n_volumes: usize, seed: u64, cfg: &SynthConfig) -> Result<Vec<VolumeRecord>> {
    (0..n_volumes).into_par_iter().map(|i| synth_volume(i, seed, cfg).map(|v| v.0)).collect()
}
