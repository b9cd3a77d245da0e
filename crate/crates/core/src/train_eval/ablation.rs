//! Evaluation under band-limited input or masked scalp regions.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::loops::{evaluate_with, DatasetReport};
use crate::corpus::manifest::SAMPLING_RATE;
use crate::corpus::Corpus;
use crate::error::{config, LeadError, Result};
use crate::model::Model;
use crate::signal::filter::DEFAULT_ORDER;
use crate::signal::montage::canonical_name;
use crate::signal::{normalize, ButterworthBandpass, FrequencyBand, STANDARD_19};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelRegion {
    Frontopolar,
    Frontal,
    Temporal,
    Parietal,
    Occipital,
    Central,
}

impl ChannelRegion {
    pub const ALL: [ChannelRegion; 6] = [
        ChannelRegion::Frontopolar,
        ChannelRegion::Frontal,
        ChannelRegion::Temporal,
        ChannelRegion::Parietal,
        ChannelRegion::Occipital,
        ChannelRegion::Central,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChannelRegion::Frontopolar => "frontopolar",
            ChannelRegion::Frontal => "frontal",
            ChannelRegion::Temporal => "temporal",
            ChannelRegion::Parietal => "parietal",
            ChannelRegion::Occipital => "occipital",
            ChannelRegion::Central => "central",
        }
    }

    pub fn channels(self) -> &'static [&'static str] {
        match self {
            ChannelRegion::Frontopolar => &["Fp1", "Fp2"],
            ChannelRegion::Frontal => &["F7", "F3", "Fz", "F4", "F8"],
            ChannelRegion::Temporal => &["T3", "T4", "T5", "T6"],
            ChannelRegion::Parietal => &["P3", "Pz", "P4"],
            ChannelRegion::Occipital => &["O1", "O2"],
            ChannelRegion::Central => &["C3", "Cz", "C4"],
        }
    }

    /// Column indices in the standard 19-channel order.
    pub fn indices(self) -> Vec<usize> {
        self.channels()
            .iter()
            .map(|c| {
                STANDARD_19
                    .iter()
                    .position(|s| canonical_name(s) == canonical_name(c))
                    .expect("region channels belong to the montage")
            })
            .collect()
    }
}

impl fmt::Display for ChannelRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChannelRegion {
    type Err = LeadError;

    fn from_str(s: &str) -> Result<Self> {
        ChannelRegion::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| config(format!("unknown region '{s}'")))
    }
}

/// Bandpass each window to `band`, re-normalize, evaluate. `All` is the
/// training band and evaluates the windows unchanged.
pub fn band_ablation<T: Scalar>(
    model: &Model<T>,
    corpus: &Corpus,
    indices: &[usize],
    split: &str,
    band: FrequencyBand,
) -> Result<DatasetReport> {
    let mut report = if band == FrequencyBand::All {
        evaluate_with(model, corpus, indices, split, &|x| Ok(x.clone()))?
    } else {
        let (lo, hi) = band.edges();
        let filter = ButterworthBandpass::design(DEFAULT_ORDER, lo, hi, SAMPLING_RATE)?;
        let transform = |x: &Array2<f32>| -> Result<Array2<f32>> { band_limit(&filter, x) };
        evaluate_with(model, corpus, indices, split, &transform)?
    };
    report.condition = Some(format!("band={band}"));
    Ok(report)
}

pub fn band_limit(filter: &ButterworthBandpass, x: &Array2<f32>) -> Result<Array2<f32>> {
    let mut out = Array2::<f64>::zeros(x.raw_dim());
    for (src, mut dst) in x.axis_iter(Axis(1)).zip(out.axis_iter_mut(Axis(1))) {
        let col: Vec<f64> = src.iter().map(|v| *v as f64).collect();
        for (d, v) in dst.iter_mut().zip(filter.filtfilt(&col)) {
            *d = v;
        }
    }
    Ok(normalize(out.view())?.mapv(|v| v as f32))
}

/// Zero the given channel columns of normalized windows, evaluate.
pub fn mask_ablation<T: Scalar>(
    model: &Model<T>,
    corpus: &Corpus,
    indices: &[usize],
    split: &str,
    channels: &[usize],
) -> Result<DatasetReport> {
    if let Some(bad) = channels.iter().find(|c| **c >= corpus.n_channels()) {
        return Err(LeadError::Shape(format!(
            "channel {bad} outside {} channels",
            corpus.n_channels()
        )));
    }
    let transform = |x: &Array2<f32>| -> Result<Array2<f32>> {
        let mut y = x.clone();
        for &c in channels {
            y.column_mut(c).fill(0.0);
        }
        Ok(y)
    };
    evaluate_with(model, corpus, indices, split, &transform)
}

pub fn region_ablation<T: Scalar>(
    model: &Model<T>,
    corpus: &Corpus,
    indices: &[usize],
    split: &str,
    region: ChannelRegion,
) -> Result<DatasetReport> {
    let mut report = mask_ablation(model, corpus, indices, split, &region.indices())?;
    report.condition = Some(format!("region={region}"));
    Ok(report)
}
