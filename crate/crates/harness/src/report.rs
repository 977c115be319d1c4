//! Per-slice metrics, per-volume and global means, and their CSV/JSON forms.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use freqgate_core::metrics::Overlap;
use freqgate_core::models::Model;
use freqgate_data::SliceSample;
use serde::{Deserialize, Serialize};

use crate::batch::{image_batch, Batches};
use crate::error::{HarnessError, Result};

/// Version of the metrics CSV layout. Bump when columns change.
pub const METRICS_CSV_VERSION: u32 = 1;
pub const METRICS_CSV_HEADER: &str = "schema_version,volume_id,slice_index,dice,iou,intersection,predicted,target";
pub const THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceRow {
    pub volume_id: String,
    pub slice_index: usize,
    pub dice: f64,
    pub iou: f64,
    pub intersection: u64,
    pub predicted: u64,
    pub target: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeRow {
    pub volume_id: String,
    pub slices: usize,
    pub mean_dice: f64,
    pub mean_iou: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub slices: Vec<SliceRow>,
    pub volumes: Vec<VolumeRow>,
    /// Mean of the per-volume means; every volume weighs the same.
    pub mean_dice_volume_weighted: f64,
    pub mean_iou_volume_weighted: f64,
    /// Mean over all slices; larger volumes weigh more.
    pub mean_dice_slice_weighted: f64,
    pub mean_iou_slice_weighted: f64,
    /// Training loss per optimizer step, when the report comes from training.
    #[serde(default)]
    pub loss_curve: Vec<f64>,
    #[serde(default)]
    pub epoch_seconds: Vec<f64>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in v {
        s += x;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

impl MetricReport {
    /// Aggregates slice rows. Rows are grouped by volume in order of first
    /// appearance.
    pub fn from_rows(slices: Vec<SliceRow>) -> Self {
        let mut volumes: Vec<VolumeRow> = Vec::new();
        let mut sums: Vec<(f64, f64)> = Vec::new();
        for r in &slices {
            match volumes.iter().position(|v| v.volume_id == r.volume_id) {
                Some(i) => {
                    volumes[i].slices += 1;
                    sums[i].0 += r.dice;
                    sums[i].1 += r.iou;
                }
                None => {
                    volumes.push(VolumeRow {
                        volume_id: r.volume_id.clone(),
                        slices: 1,
                        mean_dice: 0.0,
                        mean_iou: 0.0,
                    });
                    sums.push((r.dice, r.iou));
                }
            }
        }
        for (v, (d, i)) in volumes.iter_mut().zip(sums) {
            v.mean_dice = d / v.slices as f64;
            v.mean_iou = i / v.slices as f64;
        }
        MetricReport {
            mean_dice_volume_weighted: mean(volumes.iter().map(|v| v.mean_dice)),
            mean_iou_volume_weighted: mean(volumes.iter().map(|v| v.mean_iou)),
            mean_dice_slice_weighted: mean(slices.iter().map(|r| r.dice)),
            mean_iou_slice_weighted: mean(slices.iter().map(|r| r.iou)),
            slices,
            volumes,
            loss_curve: Vec::new(),
            epoch_seconds: Vec::new(),
        }
    }

    /// The headline number: volume-weighted Mean Dice.
    pub fn mean_dice(&self) -> f64 {
        self.mean_dice_volume_weighted
    }

    /// Per-slice rows under [`METRICS_CSV_HEADER`]. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.slices.len() + 1));
        out.push_str(METRICS_CSV_HEADER);
        out.push('\n');
        for r in &self.slices {
            let _ = writeln!(
                out,
                "{METRICS_CSV_VERSION},{},{},{},{},{},{},{}",
                r.volume_id, r.slice_index, r.dice, r.iou, r.intersection, r.predicted, r.target
            );
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Vec<SliceRow>> {
        let mut lines = text.lines();
        if lines.next() != Some(METRICS_CSV_HEADER) {
            return Err(HarnessError::Config("metrics CSV header does not match this version".into()));
        }
        lines
            .map(|line| {
                let f: Vec<&str> = line.split(',').collect();
                let bad = || HarnessError::Config(format!("bad metrics row: {line}"));
                if f.len() != 8 || f[0] != METRICS_CSV_VERSION.to_string() {
                    return Err(bad());
                }
                Ok(SliceRow {
                    volume_id: f[1].to_string(),
                    slice_index: f[2].parse().map_err(|_| bad())?,
                    dice: f[3].parse().map_err(|_| bad())?,
                    iou: f[4].parse().map_err(|_| bad())?,
                    intersection: f[5].parse().map_err(|_| bad())?,
                    predicted: f[6].parse().map_err(|_| bad())?,
                    target: f[7].parse().map_err(|_| bad())?,
                })
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let csv = dir.join(format!("{stem}.csv"));
        fs::write(&csv, self.to_csv()).map_err(|e| HarnessError::io(&csv, e))?;
        let json = dir.join(format!("{stem}.json"));
        fs::write(&json, self.to_json()).map_err(|e| HarnessError::io(&json, e))
    }
}

/// Foreground decision per pixel: sigmoid ≥ 0.5 (logit ≥ 0) for one output
/// channel, argmax ≠ 0 otherwise.
pub fn foreground(logits: &[f32], classes: usize, pixels: usize) -> Vec<bool> {
    if classes == 1 {
        return logits.iter().map(|&z| 1.0 / (1.0 + (-z as f64).exp()) >= THRESHOLD).collect();
    }
    (0..pixels)
        .map(|p| {
            let mut best = 0;
            for c in 1..classes {
                if logits[c * pixels + p] > logits[best * pixels + p] {
                    best = c;
                }
            }
            best != 0
        })
        .collect()
}

/// Runs inference over `samples` and scores each slice at threshold 0.5.
pub fn evaluate(model: &Model<f32>, samples: &[SliceSample], batch_size: usize) -> Result<MetricReport> {
    let spec = &model.spec;
    let mut rows = Vec::with_capacity(samples.len());
    for idx in Batches::sequential(samples.len(), batch_size) {
        let x = image_batch(samples, &idx, spec.image_size)?;
        let logits = model.predict(&x)?;
        let pixels = spec.image_size * spec.image_size;
        let per = spec.num_classes * pixels;
        for (k, &i) in idx.iter().enumerate() {
            let s = &samples[i];
            let pred = foreground(&logits.data()[k * per..(k + 1) * per], spec.num_classes, pixels);
            let target: Vec<bool> = s.mask.iter().map(|&m| m != 0).collect();
            let o = Overlap::from_masks(&pred, &target);
            rows.push(SliceRow {
                volume_id: s.volume_id.clone(),
                slice_index: s.slice_index,
                dice: o.dice(),
                iou: o.iou(),
                intersection: o.intersection,
                predicted: o.pred,
                target: o.target,
            });
        }
    }
    Ok(MetricReport::from_rows(rows))
}
