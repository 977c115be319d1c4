//! Overlap metrics on binarised masks, computed from integer counts.

use serde::{Deserialize, Serialize};

use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overlap {
    pub intersection: u64,
    pub pred: u64,
    pub target: u64,
}

impl Overlap {
    /// Binarise `probs` at `threshold` (inclusive) and count against a
    /// target binarised at 0.5.
    pub fn from_probs<T: Scalar>(probs: &[T], target: &[T], threshold: f64) -> Self {
        let mut o = Overlap::default();
        for (&p, &g) in probs.iter().zip(target) {
            let (p, g) = (p.as_f64() >= threshold, g.as_f64() >= 0.5);
            o.pred += p as u64;
            o.target += g as u64;
            o.intersection += (p && g) as u64;
        }
        o
    }

    pub fn from_masks(pred: &[bool], target: &[bool]) -> Self {
        let mut o = Overlap::default();
        for (&p, &g) in pred.iter().zip(target) {
            o.pred += p as u64;
            o.target += g as u64;
            o.intersection += (p && g) as u64;
        }
        o
    }

    pub fn union(&self) -> u64 {
        self.pred + self.target - self.intersection
    }

    /// `2|P∩G| / (|P|+|G|)`, or 1 when both masks are empty.
    pub fn dice(&self) -> f64 {
        let s = self.pred + self.target;
        if s == 0 {
            1.0
        } else {
            2.0 * self.intersection as f64 / s as f64
        }
    }

    /// `|P∩G| / |P∪G|`, or 1 when both masks are empty.
    pub fn iou(&self) -> f64 {
        let u = self.union();
        if u == 0 {
            1.0
        } else {
            self.intersection as f64 / u as f64
        }
    }
}

pub fn dice_coeff<T: Scalar>(probs: &[T], target: &[T], threshold: f64) -> f64 {
    Overlap::from_probs(probs, target, threshold).dice()
}

pub fn iou<T: Scalar>(probs: &[T], target: &[T], threshold: f64) -> f64 {
    Overlap::from_probs(probs, target, threshold).iou()
}
