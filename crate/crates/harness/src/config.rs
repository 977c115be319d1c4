//! The single JSON configuration file.

use std::fs;
use std::path::{Path, PathBuf};

use freqgate_core::losses::LossKind;
use freqgate_core::models::{ModelKind, ModelSpec};
use freqgate_data::{AugmentConfig, PreprocessConfig};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Momentum gradient descent with decoupled weight decay.
    #[default]
    Sgd,
    /// Adaptive moments with decoupled weight decay.
    Adamw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    /// Directory of volume containers.
    pub volumes: PathBuf,
    /// Dataset manifest listing train/val/test ids.
    pub manifest: PathBuf,
}

impl Default for DataPaths {
    fn default() -> Self {
        DataPaths { volumes: PathBuf::from("data/volumes"), manifest: PathBuf::from("data/manifest.json") }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelSpec,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub betas: (f64, f64),
    pub adam_eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossKind,
    /// Weight of the Dice term in `bce_dice`.
    pub dice_weight: f64,
    pub seed: u64,
    pub eval_every: usize,
    /// Stop once validation Mean Dice reaches this value.
    pub early_stop_dice: Option<f64>,
    pub data: DataPaths,
    pub preprocess: PreprocessConfig,
    /// Training-time augmentation; `null` disables it.
    pub augment: Option<AugmentConfig>,
    pub out_dir: PathBuf,
    /// Worker threads for preprocessing and batched kernels.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelSpec::desk_scale(ModelKind::Gfnet),
            optimizer: OptimizerKind::Sgd,
            lr: 0.001,
            weight_decay: 0.01,
            momentum: 0.9,
            betas: (0.9, 0.999),
            adam_eps: 1e-8,
            epochs: 20,
            batch_size: 4,
            loss: LossKind::BceDice,
            dice_weight: 1.0,
            seed: 0,
            eval_every: 1,
            early_stop_dice: None,
            data: DataPaths::default(),
            preprocess: PreprocessConfig::default(),
            augment: None,
            out_dir: PathBuf::from("runs/default"),
            threads: 1,
        }
    }
}

fn bad(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(|e| bad(e.to_string()))?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(bad(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(bad(format!("weight_decay must be non-negative, got {}", self.weight_decay)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(bad(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2) && self.adam_eps > 0.0) {
            return Err(bad("betas must lie in [0, 1) and adam_eps must be positive"));
        }
        if self.epochs < 1 {
            return Err(bad("epochs must be at least 1"));
        }
        if self.batch_size < 1 || self.eval_every < 1 || self.threads < 1 {
            return Err(bad("batch_size, eval_every and threads must be at least 1"));
        }
        if self.loss == LossKind::Ce && self.model.num_classes < 2 {
            return Err(bad("the ce loss needs num_classes >= 2"));
        }
        if !(self.dice_weight >= 0.0 && self.dice_weight.is_finite()) {
            return Err(bad("dice_weight must be non-negative"));
        }
        if self.preprocess.target_size != self.model.image_size {
            return Err(bad(format!(
                "preprocess.target_size {} differs from model.image_size {}",
                self.preprocess.target_size, self.model.image_size
            )));
        }
        self.preprocess.validate().map_err(|e| bad(e.to_string()))?;
        if let Some(a) = &self.augment {
            a.validate().map_err(|e| bad(e.to_string()))?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            HarnessError::Config(m) => bad(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let cfg = TrainConfig::default();
        cfg.validate().unwrap();
        assert_eq!(TrainConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        assert_eq!((cfg.lr, cfg.weight_decay), (0.001, 0.01));
    }

    #[test]
    fn partial_json_takes_defaults() {
        let cfg = TrainConfig::from_json(
            r#"{"epochs": 3, "model": {"kind": "unet", "base_filters": 8, "depth": 3, "image_size": 64}}"#,
        )
        .unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.model.kind, ModelKind::Unet);
        assert_eq!(cfg.batch_size, 4);
    }

    #[test]
    fn rejects_invalid_values() {
        for text in [
            r#"{"lr": 0}"#,
            r#"{"lr": -1}"#,
            r#"{"epochs": 0}"#,
            r#"{"unknown_field": 1}"#,
            r#"{"loss": "ce"}"#,
            r#"{"preprocess": {"target_size": 32}}"#,
        ] {
            assert!(matches!(TrainConfig::from_json(text), Err(HarnessError::Config(_))), "{text}");
        }
    }
}
