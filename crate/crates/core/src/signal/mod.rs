//! Deterministic EEG preprocessing: resampling, zero-phase bandpass,
//! 10-20 montage alignment, windowing and per-channel standardization.

pub mod align;
pub mod filter;
pub mod montage;
pub mod pipeline;
pub mod resample;
pub mod segment;
pub mod spectrum;

use ndarray::Array2;

use crate::error::{data, Result};

pub use align::{align_channels, plan_alignment, AlignmentPlan, ChannelSource};
pub use filter::{bandpass, bandpass_matrix, ButterworthBandpass};
pub use montage::{Electrode, Montage, STANDARD_19};
pub use pipeline::{preprocess_trial, PrepConfig};
pub use resample::{rational_ratio, resample};
pub use segment::{normalize, segment, window_count, NORM_EPS};
pub use spectrum::{band_power, FrequencyBand};

/// One continuous multichannel recording before alignment.
///
/// `data` is time-major: one row per timestamp, one column per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrial {
    pub data: Array2<f64>,
    pub channel_names: Vec<String>,
    pub coords: Vec<[f64; 3]>,
    pub fs: f64,
}

impl RawTrial {
    pub fn new(
        data: Array2<f64>,
        channel_names: Vec<String>,
        coords: Vec<[f64; 3]>,
        fs: f64,
    ) -> Result<Self> {
        let trial = RawTrial {
            data,
            channel_names,
            coords,
            fs,
        };
        trial.validate()?;
        Ok(trial)
    }

    pub fn n_times(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.data.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs > 0.0) || !self.fs.is_finite() {
            return Err(data(format!("sampling rate must be positive, got {}", self.fs)));
        }
        let c = self.data.ncols();
        if self.channel_names.len() != c || self.coords.len() != c {
            return Err(data(format!(
                "trial has {c} data columns, {} channel names and {} coordinates",
                self.channel_names.len(),
                self.coords.len()
            )));
        }
        for (i, name) in self.channel_names.iter().enumerate() {
            if self.channel_names[..i]
                .iter()
                .any(|other| other.eq_ignore_ascii_case(name))
            {
                return Err(data(format!("duplicate channel name {name}")));
            }
        }
        for (name, p) in self.channel_names.iter().zip(&self.coords) {
            let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(data(format!(
                    "coordinates of {name} are not on the unit sphere (|r| = {norm})"
                )));
            }
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(data("trial contains non-finite samples"));
        }
        Ok(())
    }
}
