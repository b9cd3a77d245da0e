use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{align_channels, bandpass_matrix, filter::DEFAULT_ORDER, normalize, resample, segment};
use super::{Montage, RawTrial};
use crate::error::{config, Result};

/// Preprocessing parameters. Defaults produce 1-second, non-overlapping,
/// 0.5-45 Hz windows at 128 Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepConfig {
    pub target_fs: f64,
    pub lo: f64,
    pub hi: f64,
    pub win: usize,
    pub stride: usize,
    pub filter_order: usize,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            target_fs: 128.0,
            lo: 0.5,
            hi: 45.0,
            win: 128,
            stride: 128,
            filter_order: DEFAULT_ORDER,
        }
    }
}

impl PrepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_fs > 0.0) {
            return Err(config("target_fs must be positive"));
        }
        if !(self.lo > 0.0 && self.lo < self.hi && self.hi < self.target_fs / 2.0) {
            return Err(config(format!(
                "band must satisfy 0 < lo < hi < target_fs/2, got {}..{} at {} Hz",
                self.lo, self.hi, self.target_fs
            )));
        }
        if self.win == 0 || self.stride == 0 || self.stride > self.win {
            return Err(config("window must satisfy 0 < stride <= win"));
        }
        if self.filter_order == 0 {
            return Err(config("filter_order must be positive"));
        }
        Ok(())
    }
}

/// resample -> bandpass -> align -> segment -> normalize.
///
/// Filtering runs over the whole trial so that short windows do not carry
/// filter edge transients.
pub fn preprocess_trial(trial: &RawTrial, cfg: &PrepConfig, montage: &Montage) -> Result<Vec<Array2<f32>>> {
    cfg.validate()?;
    trial.validate()?;
    let resampled = resample(trial, cfg.target_fs)?;
    let filtered = RawTrial {
        data: bandpass_matrix(resampled.data.view(), cfg.lo, cfg.hi, cfg.target_fs, cfg.filter_order)?,
        ..resampled
    };
    let aligned = align_channels(&filtered, montage)?;
    segment(aligned.data.view(), cfg.win, cfg.stride)?
        .into_iter()
        .map(|w| Ok(normalize(w.view())?.mapv(|v| v as f32)))
        .collect()
}
