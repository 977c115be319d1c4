//! Training loop with best/last checkpoints and exact resume.
//!
//! Every random stream is derived from the config seed and a position in the
//! run: the shuffle from the epoch, dropout and augmentation from the global
//! step. A run resumed from `last.ckpt` therefore draws the same numbers as
//! one that never stopped.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use freqgate_core::losses::loss_from_logits;
use freqgate_core::models::Checkpoint;
use freqgate_core::models::Model;
use freqgate_core::Tape;
use freqgate_data::{augment, preprocess_dataset, DatasetManifest, SliceSample};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::batch::{image_batch, target_batch, Batches};
use crate::config::TrainConfig;
use crate::error::{HarnessError, Result};
use crate::optim::{OptimConfig, Optimizer};
use crate::report::{evaluate, MetricReport};

const SHUFFLE_STREAM: u64 = 0x5348_5546;
const DROPOUT_STREAM: u64 = 0x4452_4f50;
const AUGMENT_STREAM: u64 = 0x4155_474d;

pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const VAL_METRICS: &str = "val_metrics";
pub const TRAIN_LOG: &str = "train_log.json";

fn stream(seed: u64, salt: u64, position: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ salt);
    r.set_stream(position);
    r
}

/// Preprocessed training and validation slices.
#[derive(Clone, Debug)]
pub struct TrainData {
    pub train: Vec<SliceSample>,
    pub val: Vec<SliceSample>,
    pub notes: Vec<String>,
}

/// Loads the manifest's train and val volumes and preprocesses them.
pub fn load_data(cfg: &TrainConfig) -> Result<TrainData> {
    let manifest = DatasetManifest::load(&cfg.data.manifest)?;
    let load = |ids: &[String]| freqgate_data::volume::load_volumes(&cfg.data.volumes, ids);
    let train = preprocess_dataset(&load(&manifest.train)?, &cfg.preprocess, cfg.threads)?;
    let val = preprocess_dataset(&load(&manifest.val)?, &cfg.preprocess, cfg.threads)?;
    let mut notes = train.notes;
    notes.extend(val.notes);
    Ok(TrainData { train: train.samples, val: val.samples, notes })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u64,
    pub mean_loss: f64,
    pub val_mean_dice: Option<f64>,
    pub val_mean_iou: Option<f64>,
}

/// Mutable training state; everything needed to continue lives in
/// [`Trainer::checkpoint`].
pub struct Trainer {
    pub cfg: TrainConfig,
    pub model: Model<f32>,
    pub opt: Optimizer,
    /// Optimizer steps taken so far.
    pub step: u64,
    /// Completed epochs.
    pub epoch: u64,
    pub loss_curve: Vec<f64>,
    pub best_dice: Option<f64>,
    pub history: Vec<EpochRecord>,
}

impl Trainer {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let model = Model::<f32>::build(&cfg.model)?;
        let opt = Optimizer::new(OptimConfig::from_train(cfg), &model.params);
        Ok(Trainer {
            cfg: cfg.clone(),
            model,
            opt,
            step: 0,
            epoch: 0,
            loss_curve: Vec::new(),
            best_dice: None,
            history: Vec::new(),
        })
    }

    pub fn resume(cfg: &TrainConfig, ckpt: &Checkpoint) -> Result<Self> {
        cfg.validate()?;
        if ckpt.manifest.spec != cfg.model {
            return Err(HarnessError::Config("checkpoint model spec differs from the config".into()));
        }
        let model = ckpt.to_model::<f32>().map_err(|e| HarnessError::Config(e.to_string()))?;
        let extra = &ckpt.manifest.extra;
        let field =
            |k: &str| extra.get(k).cloned().ok_or_else(|| HarnessError::Config(format!("checkpoint lacks `{k}`")));
        fn parse<T: serde::de::DeserializeOwned>(v: serde_json::Value, k: &str) -> Result<T> {
            serde_json::from_value(v).map_err(|e| HarnessError::Config(format!("checkpoint `{k}`: {e}")))
        }
        let loss_curve: Vec<f64> = parse(field("loss_curve")?, "loss_curve")?;
        let best_dice: Option<f64> = parse(field("best_val_dice")?, "best_val_dice")?;
        let history: Vec<EpochRecord> = parse(field("history")?, "history")?;
        let opt_steps: u64 = parse(field("optimizer_steps")?, "optimizer_steps")?;
        let opt =
            Optimizer::restore(OptimConfig::from_train(cfg), &model.params, opt_steps, |k| ckpt.array(k).cloned())?;
        Ok(Trainer {
            cfg: cfg.clone(),
            model,
            opt,
            step: ckpt.manifest.step,
            epoch: ckpt.manifest.epoch,
            loss_curve,
            best_dice,
            history,
        })
    }

    /// One forward/backward/update on the given samples; returns the loss.
    pub fn step_batch(&mut self, samples: &[SliceSample], idx: &[usize]) -> Result<f64> {
        let spec = &self.model.spec;
        let (size, classes) = (spec.image_size, spec.num_classes);
        let augmented: Vec<SliceSample>;
        let (pool, local): (&[SliceSample], Vec<usize>) = match &self.cfg.augment {
            Some(aug) => {
                let mut rng = stream(self.cfg.seed ^ aug.seed.rotate_left(32), AUGMENT_STREAM, self.step);
                augmented = idx.iter().map(|&i| augment(&samples[i], aug, &mut rng)).collect::<Result<_, _>>()?;
                (&augmented, (0..idx.len()).collect())
            }
            None => (samples, idx.to_vec()),
        };
        let x = image_batch(pool, &local, size)?;
        let target = target_batch(pool, &local, size, classes)?;

        let at = |e: HarnessError, step: u64, epoch: u64| match e {
            HarnessError::Numeric(m) => HarnessError::Numeric(format!("step {step} (epoch {epoch}): {m}")),
            other => other,
        };
        let (step, epoch) = (self.step, self.epoch);
        let mut tape = Tape::new();
        let p = self.model.params.bind(&mut tape, true);
        let xv = tape.constant(x);
        let mut rng = stream(self.cfg.seed, DROPOUT_STREAM, step);
        let logits = self.model.forward(&mut tape, &p, xv, true, &mut rng).map_err(|e| at(e.into(), step, epoch))?;
        let loss = loss_from_logits(&mut tape, logits, &target, self.cfg.loss, self.cfg.dice_weight)
            .map_err(|e| at(e.into(), step, epoch))?;
        let value = tape.data(loss)[0] as f64;
        if !value.is_finite() {
            return Err(HarnessError::Numeric(format!("step {step} (epoch {epoch}): loss is {value}")));
        }
        let grads = tape.backward(loss).map_err(|e| at(e.into(), step, epoch))?;
        let g: Vec<_> = p.vars().iter().map(|&v| grads.get_or_zeros(v)).collect();
        if let Some(k) = g.iter().position(|t| !t.is_finite()) {
            return Err(HarnessError::Numeric(format!(
                "step {step} (epoch {epoch}): gradient of {} is not finite",
                self.model.params.names()[k]
            )));
        }
        self.opt.step(&mut self.model.params, &g);
        self.step += 1;
        self.loss_curve.push(value);
        Ok(value)
    }

    /// One pass over `train` in this epoch's shuffled order; returns the mean
    /// loss.
    pub fn run_epoch(&mut self, train: &[SliceSample]) -> Result<f64> {
        if train.is_empty() {
            return Err(HarnessError::Data(freqgate_data::DataError::Config("training set is empty".into())));
        }
        let mut rng = stream(self.cfg.seed, SHUFFLE_STREAM, self.epoch);
        let batches = Batches::shuffled(train.len(), self.cfg.batch_size, &mut rng);
        let mut total = 0.0;
        for idx in &batches {
            total += self.step_batch(train, idx)?;
        }
        self.epoch += 1;
        Ok(total / batches.len() as f64)
    }

    pub fn checkpoint(&self, metrics: BTreeMap<String, f64>) -> Checkpoint {
        let extra = json!({
            "loss_curve": self.loss_curve,
            "best_val_dice": self.best_dice,
            "history": self.history,
            "optimizer_steps": self.opt.steps,
        });
        Checkpoint::from_model(
            &self.model,
            self.step,
            self.epoch,
            metrics,
            extra,
            self.opt.state_arrays(&self.model.params),
        )
    }
}

#[derive(Clone, Debug, Serialize)]
struct TrainLog<'a> {
    config: &'a TrainConfig,
    epochs: &'a [EpochRecord],
    epoch_seconds: &'a [f64],
    stopped_early: bool,
    notes: &'a [String],
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Validation report of the best checkpoint, with the full loss curve.
    pub report: MetricReport,
    pub epochs_run: u64,
    pub stopped_early: bool,
    pub best_path: PathBuf,
    pub last_path: PathBuf,
}

fn save(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    ckpt.save(path).map_err(|e| HarnessError::io(path, e))
}

/// Trains until `cfg.epochs` epochs are complete (counting any epochs in a
/// resumed checkpoint) or validation Mean Dice reaches `early_stop_dice`.
/// Writes `best.ckpt`, `last.ckpt`, `val_metrics.{csv,json}` and
/// `train_log.json` into `cfg.out_dir`.
pub fn train(cfg: &TrainConfig, data: &TrainData, resume: bool) -> Result<TrainOutcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    pool.install(|| train_inner(cfg, data, resume))
}

fn train_inner(cfg: &TrainConfig, data: &TrainData, resume: bool) -> Result<TrainOutcome> {
    let out = &cfg.out_dir;
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let (best_path, last_path) = (out.join(BEST_CHECKPOINT), out.join(LAST_CHECKPOINT));
    let mut t = if resume {
        let ckpt = Checkpoint::load(&last_path).map_err(|e| HarnessError::io(&last_path, e))?;
        Trainer::resume(cfg, &ckpt)?
    } else {
        Trainer::new(cfg)?
    };
    if data.train.is_empty() {
        return Err(HarnessError::Data(freqgate_data::DataError::Config("training set is empty".into())));
    }

    let mut seconds = Vec::new();
    let mut stopped_early = t.best_dice.zip(cfg.early_stop_dice).is_some_and(|(b, target)| b >= target);
    while t.epoch < cfg.epochs as u64 && !stopped_early {
        let started = Instant::now();
        let mean_loss = t.run_epoch(&data.train)?;
        let last_epoch = t.epoch == cfg.epochs as u64;
        let mut record = EpochRecord { epoch: t.epoch, mean_loss, val_mean_dice: None, val_mean_iou: None };
        let mut metrics = BTreeMap::from([("train_loss".to_string(), mean_loss)]);
        if t.epoch % cfg.eval_every as u64 == 0 || last_epoch {
            let rep = evaluate(&t.model, &data.val, cfg.batch_size)?;
            let dice = rep.mean_dice();
            record.val_mean_dice = Some(dice);
            record.val_mean_iou = Some(rep.mean_iou_volume_weighted);
            metrics.insert("val_mean_dice".into(), dice);
            metrics.insert("val_mean_iou".into(), rep.mean_iou_volume_weighted);
            t.history.push(record);
            if t.best_dice.map_or(true, |b| dice > b) {
                t.best_dice = Some(dice);
                save(&t.checkpoint(metrics.clone()), &best_path)?;
            }
            stopped_early = cfg.early_stop_dice.is_some_and(|target| dice >= target);
        } else {
            t.history.push(record);
        }
        save(&t.checkpoint(metrics), &last_path)?;
        seconds.push(started.elapsed().as_secs_f64());
    }
    if !best_path.exists() {
        // No evaluation happened yet (eval_every beyond the run): the last
        // state is the best we have.
        fs::copy(&last_path, &best_path).map_err(|e| HarnessError::io(&best_path, e))?;
    }

    let best = Checkpoint::load(&best_path).map_err(|e| HarnessError::io(&best_path, e))?;
    let model = best.to_model::<f32>()?;
    let mut report = evaluate(&model, &data.val, cfg.batch_size)?;
    report.loss_curve = t.loss_curve.clone();
    report.epoch_seconds = seconds.clone();
    report.save(out, VAL_METRICS)?;
    let log = TrainLog { config: cfg, epochs: &t.history, epoch_seconds: &seconds, stopped_early, notes: &data.notes };
    let log_path = out.join(TRAIN_LOG);
    fs::write(&log_path, serde_json::to_string_pretty(&log).expect("log serializes"))
        .map_err(|e| HarnessError::io(&log_path, e))?;
    Ok(TrainOutcome { report, epochs_run: t.epoch, stopped_early, best_path, last_path })
}
