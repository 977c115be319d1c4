use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use freqgate_core::models::Checkpoint;
use freqgate_core::models::Model;
use freqgate_core::Tensor;
use freqgate_data::pipeline::save_slices;
use freqgate_data::synth::{synth_dataset, volume_id, SynthConfig};
use freqgate_data::{import_nifti, preprocess_dataset, DatasetManifest, SliceSample};
use serde_json::json;

use crate::bench::bench_complexity;
use crate::config::TrainConfig;
use crate::error::{HarnessError, Result};
use crate::report::evaluate;
use crate::saliency::{saliency, to_csv, to_pgm};
use crate::spectrum::spectrum_histogram;
use crate::train::{load_data, train};

#[derive(Debug, Parser)]
#[command(
    name = "fgunet",
    version,
    about = "Frequency-gated U-Net segmentation: data, training, evaluation and diagnostics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a NIfTI-1 image (and optional mask) into a volume container.
    Import {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        id: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate seeded ellipsoid volumes and a dataset manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        volumes: usize,
        #[arg(long, default_value_t = 40)]
        train: usize,
        #[arg(long, default_value_t = 10)]
        val: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        depth: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
    },
    /// Preprocess the configured splits into slice packs.
    Preprocess {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the configured model.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue from `last.ckpt` in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Score a checkpoint on one split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = Split::Val)]
        split: Split,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time direct circular convolution against FFT filtering.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = vec![8, 16, 32, 64, 128])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        channels: usize,
        /// Kernel side; 0 uses the full frame.
        #[arg(long, default_value_t = 0)]
        kernel: usize,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Histogram of z-normalized spectral magnitudes of one slice, or of the
    /// model's logits on it when a checkpoint is given.
    Spectrum {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Split::Val)]
        split: Split,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Input-gradient saliency of one slice, written as CSV and PGM.
    Saliency {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = Split::Val)]
        split: Split,
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Output path without extension.
        #[arg(long)]
        out: PathBuf,
    },
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

/// Preprocessed slices of one split.
pub fn load_split(cfg: &TrainConfig, split: Split) -> Result<Vec<SliceSample>> {
    let m = DatasetManifest::load(&cfg.data.manifest)?;
    let ids = match split {
        Split::Train => &m.train,
        Split::Val => &m.val,
        Split::Test => &m.test,
    };
    let vols = freqgate_data::volume::load_volumes(&cfg.data.volumes, ids)?;
    Ok(preprocess_dataset(&vols, &cfg.preprocess, cfg.threads)?.samples)
}

fn load_model(cfg: &TrainConfig, path: &Path) -> Result<Model<f32>> {
    let ckpt = Checkpoint::load(path).map_err(|e| HarnessError::io(path, e))?;
    if ckpt.manifest.spec != cfg.model {
        return Err(HarnessError::Config(format!(
            "checkpoint {} was trained with a different model spec than the config",
            path.display()
        )));
    }
    ckpt.to_model::<f32>().map_err(|e| HarnessError::Config(e.to_string()))
}

fn pick(samples: &[SliceSample], index: usize) -> Result<&SliceSample> {
    samples.get(index).ok_or_else(|| {
        HarnessError::Data(freqgate_data::DataError::Config(format!(
            "slice index {index} beyond {} slices",
            samples.len()
        )))
    })
}

/// Runs one subcommand and returns a one-line JSON summary.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Import { image, mask, id, out } => {
            let v = import_nifti(&image, mask.as_deref(), &id)?;
            let path = v.save(&out)?;
            Ok(json!({"volume": path, "dims": v.dims, "foreground_voxels": v.foreground_voxels()}).to_string())
        }
        Command::Synth { out, volumes, train, val, seed, depth, size } => {
            let cfg = SynthConfig { depth, size, ..SynthConfig::default() };
            let vols = synth_dataset(volumes, seed, &cfg)?;
            for v in &vols {
                v.save(&out)?;
            }
            let ids: Vec<String> = (0..volumes).map(volume_id).collect();
            let manifest = DatasetManifest::split(&ids, seed, train, val)?;
            let path = out.join("manifest.json");
            manifest.save(&path)?;
            Ok(json!({"volumes": volumes, "manifest": path}).to_string())
        }
        Command::Preprocess { config, out } => {
            let cfg = TrainConfig::load(&config)?;
            let mut counts = serde_json::Map::new();
            for (split, name) in [(Split::Train, "train"), (Split::Val, "val"), (Split::Test, "test")] {
                let samples = load_split(&cfg, split)?;
                save_slices(&out, name, &samples)?;
                counts.insert(name.into(), json!(samples.len()));
            }
            Ok(serde_json::Value::Object(counts).to_string())
        }
        Command::Train { config, resume } => {
            let cfg = TrainConfig::load(&config)?;
            let data = load_data(&cfg)?;
            let outcome = train(&cfg, &data, resume)?;
            Ok(json!({
                "epochs": outcome.epochs_run,
                "stopped_early": outcome.stopped_early,
                "val_mean_dice": outcome.report.mean_dice_volume_weighted,
                "val_mean_iou": outcome.report.mean_iou_volume_weighted,
                "best": outcome.best_path,
            })
            .to_string())
        }
        Command::Eval { config, checkpoint, split, out } => {
            let cfg = TrainConfig::load(&config)?;
            let model = load_model(&cfg, &checkpoint)?;
            let samples = load_split(&cfg, split)?;
            let report = evaluate(&model, &samples, cfg.batch_size)?;
            report.save(&out, "metrics")?;
            Ok(json!({
                "slices": report.slices.len(),
                "mean_dice_volume_weighted": report.mean_dice_volume_weighted,
                "mean_iou_volume_weighted": report.mean_iou_volume_weighted,
                "mean_dice_slice_weighted": report.mean_dice_slice_weighted,
                "mean_iou_slice_weighted": report.mean_iou_slice_weighted,
            })
            .to_string())
        }
        Command::Bench { sizes, channels, kernel, reps, seed, out } => {
            let table = bench_complexity(&sizes, channels, kernel, reps, seed)?;
            write(&out, table.to_csv())?;
            Ok(json!({"crossover": table.crossover, "csv": out}).to_string())
        }
        Command::Spectrum { config, split, index, checkpoint, out } => {
            let cfg = TrainConfig::load(&config)?;
            let samples = load_split(&cfg, split)?;
            let s = pick(&samples, index)?;
            let x = Tensor::new(&[1, 1, s.height, s.width], s.image.iter().map(|&v| v as f64).collect())?;
            let x = match checkpoint {
                Some(path) => load_model(&cfg, &path)?.cast::<f64>().predict(&x)?,
                None => x,
            };
            let h = spectrum_histogram(&x)?;
            write(&out, h.to_csv())?;
            Ok(json!({"degenerate": h.degenerate, "mass_in_range": h.mass_in_range(), "csv": out}).to_string())
        }
        Command::Saliency { config, checkpoint, split, index, out } => {
            let cfg = TrainConfig::load(&config)?;
            let model = load_model(&cfg, &checkpoint)?;
            let samples = load_split(&cfg, split)?;
            let s = pick(&samples, index)?;
            let heat = saliency(&model, &s.image)?;
            let csv = out.with_extension("csv");
            let pgm = out.with_extension("pgm");
            write(&csv, to_csv(&heat, s.width))?;
            write(&pgm, to_pgm(&heat, s.width))?;
            Ok(json!({"csv": csv, "pgm": pgm}).to_string())
        }
    }
}
