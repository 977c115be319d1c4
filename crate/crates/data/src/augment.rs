use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::slices::{elastic, rotate, scale, SliceSample};

/// Random geometric augmentation applied identically to image and mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Closed range of rotation angles in degrees.
    pub rotation_deg_range: (f64, f64),
    pub scale_range: (f64, f64),
    pub elastic_alpha: f64,
    pub elastic_sigma: f64,
    pub p_rotate: f64,
    pub p_scale: f64,
    pub p_elastic: f64,
    /// Mixed into the trainer's augmentation stream; [`augment`] itself
    /// draws from the generator it is given.
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            rotation_deg_range: (-15.0, 15.0),
            scale_range: (0.9, 1.1),
            elastic_alpha: 10.0,
            elastic_sigma: 4.0,
            p_rotate: 0.5,
            p_scale: 0.5,
            p_elastic: 0.5,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// Every probability set to zero.
    pub fn disabled() -> Self {
        AugmentConfig { p_rotate: 0.0, p_scale: 0.0, p_elastic: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let (r0, r1) = self.rotation_deg_range;
        let (s0, s1) = self.scale_range;
        if !(r0.is_finite() && r1.is_finite() && r0 <= r1) {
            return Err(DataError::Config(format!("rotation range ({r0}, {r1}) is not ordered")));
        }
        if !(s0 > 0.0 && s1.is_finite() && s0 <= s1) {
            return Err(DataError::Config(format!("scale range ({s0}, {s1}) must be positive and ordered")));
        }
        if !(self.elastic_alpha >= 0.0 && self.elastic_sigma >= 0.0) {
            return Err(DataError::Config("elastic alpha and sigma must be non-negative".into()));
        }
        for (name, p) in [("p_rotate", self.p_rotate), ("p_scale", self.p_scale), ("p_elastic", self.p_elastic)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(DataError::Config(format!("{name} = {p} is not a probability")));
            }
        }
        Ok(())
    }
}

fn pick(rng: &mut dyn RngCore, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Draws rotation, scale and elastic transforms in that order, each with its
/// own probability. Every decision consumes the same random draws whether or
/// not the transform fires, so one sample's outcome never shifts the stream
/// seen by the next.
pub fn augment(s: &SliceSample, cfg: &AugmentConfig, rng: &mut dyn RngCore) -> Result<SliceSample> {
    cfg.validate()?;
    let fire = [rng.gen::<f64>() < cfg.p_rotate, rng.gen::<f64>() < cfg.p_scale, rng.gen::<f64>() < cfg.p_elastic];
    let degrees = pick(rng, cfg.rotation_deg_range.0, cfg.rotation_deg_range.1);
    let factor = pick(rng, cfg.scale_range.0, cfg.scale_range.1);
    let field_seed = rng.next_u64();

    let mut out = s.clone();
    if fire[0] {
        out = rotate(&out, degrees);
    }
    if fire[1] {
        out = scale(&out, factor);
    }
    if fire[2] {
        out = elastic(&out, cfg.elastic_alpha, cfg.elastic_sigma, field_seed);
    }
    Ok(out)
}
