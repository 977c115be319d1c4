//! Histogram of z-normalized spectral magnitudes.

use std::fmt::Write as _;

use freqgate_core::fft::rfft2;
use freqgate_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const BINS: usize = 64;
pub const RANGE: (f64, f64) = (-4.0, 4.0);
const FLAT: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumHistogram {
    pub counts: Vec<u64>,
    pub below: u64,
    pub above: u64,
    /// Constant input or constant magnitudes: nothing to normalize, the
    /// histogram is left empty.
    pub degenerate: bool,
}

impl SpectrumHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.below + self.above
    }

    /// Share of values that landed inside the binned range.
    pub fn mass_in_range(&self) -> f64 {
        let t = self.total();
        if t == 0 {
            0.0
        } else {
            self.counts.iter().sum::<u64>() as f64 / t as f64
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,lower,upper,count\n");
        if self.degenerate {
            out.push_str("degenerate,,,0\n");
            return out;
        }
        let width = (RANGE.1 - RANGE.0) / BINS as f64;
        for (i, c) in self.counts.iter().enumerate() {
            let lo = RANGE.0 + i as f64 * width;
            let _ = writeln!(out, "bin,{lo},{},{c}", lo + width);
        }
        let _ = writeln!(out, "below,,{},{}", RANGE.0, self.below);
        let _ = writeln!(out, "above,{},,{}", RANGE.1, self.above);
        out
    }
}

fn spread(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    let var = v.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Half-spectrum magnitudes of every plane in `x` (shape `B × C × H × W`),
/// standardized together and binned into [`BINS`] bins over [`RANGE`].
pub fn spectrum_histogram(x: &Tensor<f64>) -> Result<SpectrumHistogram> {
    let empty = |degenerate| SpectrumHistogram { counts: vec![0; BINS], below: 0, above: 0, degenerate };
    let (_, input_std) = spread(x.data().iter().copied());
    if !(input_std >= FLAT) {
        return Ok(empty(true));
    }
    let s = rfft2(x)?;
    let mags: Vec<f64> = s.data().chunks_exact(2).map(|z| z[0].hypot(z[1])).collect();
    let (mean, std) = spread(mags.iter().copied());
    if !(std >= FLAT) {
        return Ok(empty(true));
    }
    let mut h = empty(false);
    let width = (RANGE.1 - RANGE.0) / BINS as f64;
    for m in mags {
        let z = (m - mean) / std;
        if z < RANGE.0 {
            h.below += 1;
        } else if z >= RANGE.1 {
            h.above += 1;
        } else {
            h.counts[(((z - RANGE.0) / width) as usize).min(BINS - 1)] += 1;
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_and_zero_inputs_are_degenerate() {
        for v in [0.0, 3.0] {
            let h = spectrum_histogram(&Tensor::full(&[1, 1, 8, 8], v)).unwrap();
            assert!(h.degenerate);
            assert_eq!(h.total(), 0);
            assert!(h.to_csv().contains("degenerate"));
        }
    }

    #[test]
    fn counts_cover_every_bin() {
        let x = Tensor::from_fn(&[1, 2, 16, 16], |i| ((i * 7919) % 101) as f64);
        let h = spectrum_histogram(&x).unwrap();
        assert_eq!(h.total(), 2 * 16 * 9);
        assert_eq!(h.to_csv().lines().count(), 1 + BINS + 2);
    }
}
