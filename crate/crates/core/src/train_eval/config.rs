use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::AugmentationParams;
use crate::error::{config, LeadError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pretrain,
    Finetune,
    Supervised,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Pretrain => "pretrain",
            Phase::Finetune => "finetune",
            Phase::Supervised => "supervised",
        })
    }
}

impl FromStr for Phase {
    type Err = LeadError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pretrain" => Ok(Phase::Pretrain),
            "finetune" => Ok(Phase::Finetune),
            "supervised" => Ok(Phase::Supervised),
            other => Err(config(format!("unknown phase '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub phase: Phase,
    pub epochs: usize,
    pub batch_size: usize,
    /// Subject group size for pre-training batches.
    pub group_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub grad_clip_norm: f64,
    /// Fine-tuning only.
    pub patience: usize,
    pub swa_enabled: bool,
    /// Snapshots are taken from `floor(swa_start * epochs)` onwards.
    pub swa_start: f64,
    /// Augment fine-tuning inputs (pre-training always augments).
    pub augment: bool,
    pub augmentation: AugmentationParams,
    pub seed: u64,
}

impl TrainConfig {
    pub fn pretrain() -> Self {
        TrainConfig {
            phase: Phase::Pretrain,
            epochs: 50,
            batch_size: 512,
            group_size: 2,
            lr: 2e-4,
            weight_decay: 0.01,
            grad_clip_norm: 4.0,
            patience: 15,
            swa_enabled: true,
            swa_start: 0.6,
            augment: true,
            augmentation: AugmentationParams::default(),
            seed: 41,
        }
    }

    pub fn finetune() -> Self {
        TrainConfig {
            phase: Phase::Finetune,
            epochs: 100,
            batch_size: 128,
            lr: 1e-4,
            augment: false,
            ..TrainConfig::pretrain()
        }
    }

    pub fn supervised() -> Self {
        TrainConfig {
            phase: Phase::Supervised,
            ..TrainConfig::finetune()
        }
    }

    pub fn for_phase(phase: Phase) -> Self {
        match phase {
            Phase::Pretrain => Self::pretrain(),
            Phase::Finetune => Self::finetune(),
            Phase::Supervised => Self::supervised(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.group_size == 0 {
            return Err(config("epochs, batch_size and group_size must be positive"));
        }
        if !self.batch_size.is_multiple_of(self.group_size) {
            return Err(config(format!(
                "batch_size {} is not a multiple of group_size {}",
                self.batch_size, self.group_size
            )));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(config(format!("lr must be non-negative, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0) || !(self.grad_clip_norm > 0.0) {
            return Err(config("weight_decay must be non-negative and grad_clip_norm positive"));
        }
        if self.phase != Phase::Pretrain && self.patience > self.epochs {
            return Err(config(format!(
                "patience {} exceeds epochs {}",
                self.patience, self.epochs
            )));
        }
        if !(0.0..=1.0).contains(&self.swa_start) {
            return Err(config("swa_start must lie in [0, 1]"));
        }
        if self.phase == Phase::Pretrain || self.augment {
            self.augmentation.validate()?;
        }
        Ok(())
    }

    /// First epoch whose parameters enter the weight average.
    pub fn swa_first_epoch(&self) -> usize {
        ((self.swa_start * self.epochs as f64).floor() as usize).min(self.epochs - 1)
    }
}
