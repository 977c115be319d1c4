#![allow(dead_code)]

use std::path::Path;

use freqgate_core::models::{Model, ModelKind, ModelSpec};
use freqgate_data::synth::{synth_dataset, SynthConfig};
use freqgate_data::{preprocess_dataset, PreprocessConfig, SliceSample};
use freqgate_harness::config::DataPaths;
use freqgate_harness::{OptimizerKind, TrainConfig, TrainData, Trainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SIZE: usize = 32;

pub fn spec(kind: ModelKind) -> ModelSpec {
    ModelSpec { base_filters: 8, depth: 2, image_size: SIZE, ..ModelSpec::desk_scale(kind) }
}

pub fn config(kind: ModelKind, out: &Path) -> TrainConfig {
    TrainConfig {
        model: spec(kind),
        preprocess: PreprocessConfig { target_size: SIZE, margin: 8, ..PreprocessConfig::default() },
        epochs: 1,
        out_dir: out.to_path_buf(),
        data: DataPaths { volumes: out.join("volumes"), manifest: out.join("volumes/manifest.json") },
        ..TrainConfig::default()
    }
}

/// Preprocessed slices of small synthetic volumes.
pub fn synth_slices(volumes: usize, seed: u64) -> Vec<SliceSample> {
    let cfg = SynthConfig { depth: 8, size: SIZE, ..SynthConfig::default() };
    let vols = synth_dataset(volumes, seed, &cfg).unwrap();
    let pre = PreprocessConfig { target_size: SIZE, margin: 8, ..PreprocessConfig::default() };
    preprocess_dataset(&vols, &pre, 1).unwrap().samples
}

pub fn tiny_data(seed: u64) -> TrainData {
    TrainData { train: synth_slices(2, seed), val: synth_slices(1, seed + 100), notes: Vec::new() }
}

/// A bright noisy disk on a dark background; the mask is the disk.
pub fn blob_sample(id: usize, rng: &mut impl Rng) -> SliceSample {
    let (cy, cx) = (rng.gen_range(10.0..22.0), rng.gen_range(10.0..22.0));
    let r: f64 = rng.gen_range(4.0..7.0);
    let mut image = Vec::with_capacity(SIZE * SIZE);
    let mut mask = Vec::with_capacity(SIZE * SIZE);
    for y in 0..SIZE {
        for x in 0..SIZE {
            let inside = (y as f64 - cy).hypot(x as f64 - cx) <= r;
            image.push(if inside { 1.5 } else { -0.5 } + rng.gen_range(-0.2f32..0.2));
            mask.push(inside as u8);
        }
    }
    SliceSample::new(&format!("blob{id:02}"), 0, SIZE, SIZE, image, mask).unwrap()
}

pub fn blobs(n: usize, seed: u64) -> Vec<SliceSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| blob_sample(i, &mut rng)).collect()
}

/// A plain U-Net driven to near-perfect fit on `samples` with AdamW.
pub fn overfit(samples: &[SliceSample], steps: usize) -> Model<f32> {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(ModelKind::Unet, dir.path());
    cfg.model.dropout_decoder = false;
    cfg.optimizer = OptimizerKind::Adamw;
    cfg.lr = 0.01;
    cfg.weight_decay = 0.0;
    let mut t = Trainer::new(&cfg).unwrap();
    let idx: Vec<usize> = (0..samples.len()).collect();
    for _ in 0..steps {
        t.step_batch(samples, &idx).unwrap();
    }
    t.model
}
