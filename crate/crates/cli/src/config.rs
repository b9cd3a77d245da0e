//! The TOML run configuration. Every section is optional; missing keys take
//! the library defaults and unknown keys are rejected.

use std::path::{Path, PathBuf};

use lead_core::augment::AugmentationParams;
use lead_core::corpus::{SplitRatios, SynthSpec};
use lead_core::model::ModelConfig;
use lead_core::signal::PrepConfig;
use lead_core::train_eval::{Phase, TrainConfig};
use lead_core::{LeadError, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synth: SynthSpec,
    pub preprocess: PreprocessSection,
    pub model: Option<ModelConfig>,
    pub pretrain: TrainSection,
    pub finetune: TrainSection,
    pub split: SplitSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    pub dataset_id: String,
    /// Class names in label order.
    pub class_names: Vec<String>,
    /// Electrode coordinate file; the bundled layout when absent.
    pub montage: Option<PathBuf>,
    pub signal: PrepConfig,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        PreprocessSection {
            dataset_id: "corpus".into(),
            class_names: vec!["HC".into(), "AD".into()],
            montage: None,
            signal: PrepConfig::default(),
        }
    }
}

/// Overrides on top of the phase defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub group_size: Option<usize>,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub grad_clip_norm: Option<f64>,
    pub patience: Option<usize>,
    pub swa_enabled: Option<bool>,
    pub swa_start: Option<f64>,
    pub augment: Option<bool>,
    pub augmentation: Option<AugmentationParams>,
    pub seed: Option<u64>,
}

impl TrainSection {
    pub fn resolve(&self, phase: Phase, seed: Option<u64>) -> Result<TrainConfig> {
        let mut c = TrainConfig::for_phase(phase);
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = self.$f.clone() { c.$f = v; } )*};
        }
        set!(epochs, batch_size, group_size, lr, weight_decay, grad_clip_norm, patience, swa_enabled, swa_start, augment, augmentation, seed);
        if let Some(s) = seed {
            c.seed = s;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub seed: u64,
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        let r = SplitRatios::default();
        SplitSection {
            seed: 41,
            train: r.train,
            val: r.val,
            test: r.test,
        }
    }
}

impl SplitSection {
    pub fn ratios(&self) -> SplitRatios {
        SplitRatios {
            train: self.train,
            val: self.val,
            test: self.test,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let cfg = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| LeadError::io(p, e))?;
                Self::parse(&text).map_err(|e| e.in_file(p))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LeadError::Config(e.to_string()))
    }

    /// Check every section, so a bad value fails before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.preprocess.signal.validate()?;
        if self.preprocess.class_names.len() < 2 {
            return Err(LeadError::Config("preprocess.class_names needs at least two classes".into()));
        }
        if let Some(m) = &self.model {
            m.validate()?;
        }
        self.pretrain.resolve(Phase::Pretrain, None)?;
        self.finetune.resolve(Phase::Finetune, None)?;
        self.split.ratios().validate()
    }

    pub fn model_config(&self) -> ModelConfig {
        self.model.clone().unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::parse("").unwrap();
        c.validate().unwrap();
        assert_eq!(c.finetune.resolve(Phase::Finetune, None).unwrap(), TrainConfig::finetune());
        assert_eq!(c.model_config(), ModelConfig::default());
    }

    #[test]
    fn overrides_and_rejections() {
        let c = RunConfig::parse("[pretrain]\nepochs = 3\nbatch_size = 16\n[model]\nd_model = 32\n").unwrap();
        let t = c.pretrain.resolve(Phase::Pretrain, Some(7)).unwrap();
        assert_eq!((t.epochs, t.batch_size, t.seed, t.lr), (3, 16, 7, 2e-4));
        assert_eq!(c.model_config().d_model, 32);
        assert!(RunConfig::parse("[pretrain]\nepoch = 3\n").is_err());
        assert!(RunConfig::parse("[bogus]\n").is_err());
        let bad = RunConfig::parse("[finetune]\npatience = 500\n").unwrap();
        assert!(bad.validate().is_err());
    }
}
