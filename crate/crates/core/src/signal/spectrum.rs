//! Periodogram band power and the canonical EEG frequency bands.

use std::fmt;
use std::str::FromStr;

use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{config, LeadError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencyBand {
    Delta,
    Theta,
    Alpha,
    Beta,
    Gamma,
    All,
}

impl FrequencyBand {
    pub const RHYTHMS: [FrequencyBand; 5] = [
        FrequencyBand::Delta,
        FrequencyBand::Theta,
        FrequencyBand::Alpha,
        FrequencyBand::Beta,
        FrequencyBand::Gamma,
    ];

    /// `(lo, hi)` edges in Hz.
    pub fn edges(self) -> (f64, f64) {
        match self {
            FrequencyBand::Delta => (0.5, 4.0),
            FrequencyBand::Theta => (4.0, 7.0),
            FrequencyBand::Alpha => (8.0, 12.0),
            FrequencyBand::Beta => (12.0, 30.0),
            FrequencyBand::Gamma => (30.0, 45.0),
            FrequencyBand::All => (0.5, 45.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FrequencyBand::Delta => "delta",
            FrequencyBand::Theta => "theta",
            FrequencyBand::Alpha => "alpha",
            FrequencyBand::Beta => "beta",
            FrequencyBand::Gamma => "gamma",
            FrequencyBand::All => "all",
        }
    }
}

impl fmt::Display for FrequencyBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FrequencyBand {
    type Err = LeadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "delta" => Ok(FrequencyBand::Delta),
            "theta" => Ok(FrequencyBand::Theta),
            "alpha" => Ok(FrequencyBand::Alpha),
            "beta" => Ok(FrequencyBand::Beta),
            "gamma" => Ok(FrequencyBand::Gamma),
            "all" => Ok(FrequencyBand::All),
            other => Err(config(format!(
                "unknown band '{other}' (expected delta, theta, alpha, beta, gamma or all)"
            ))),
        }
    }
}

/// One-sided periodogram `|X_k|^2 / n` for bins `0..=n/2`.
pub fn periodogram(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf[..=n / 2].iter().map(|c| c.norm_sqr() / n as f64).collect()
}

/// Summed periodogram power in `[lo, hi)` Hz.
pub fn band_power(x: &[f64], fs: f64, lo: f64, hi: f64) -> f64 {
    let n = x.len();
    periodogram(x)
        .iter()
        .enumerate()
        .filter(|(k, _)| {
            let f = *k as f64 * fs / n as f64;
            f >= lo && f < hi
        })
        .map(|(_, p)| p)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_edges() {
        assert_eq!(FrequencyBand::Theta.edges(), (4.0, 7.0));
        assert_eq!("GAMMA".parse::<FrequencyBand>().unwrap(), FrequencyBand::Gamma);
        assert!("kappa".parse::<FrequencyBand>().is_err());
        for b in FrequencyBand::RHYTHMS {
            let (lo, hi) = b.edges();
            assert!(lo < hi && hi < 64.0);
        }
    }

    #[test]
    fn sine_power_lands_in_its_band() {
        let x: Vec<f64> = (0..256)
            .map(|i| (2.0 * std::f64::consts::PI * 10.0 * i as f64 / 128.0).sin())
            .collect();
        let alpha = band_power(&x, 128.0, 8.0, 12.0);
        let delta = band_power(&x, 128.0, 0.5, 4.0);
        assert!(alpha > 1e6 * delta.max(1e-30));
        // Parseval: one-sided power of a unit sine is n/4 at the peak bin.
        assert!((alpha - 64.0).abs() < 1e-9);
    }
}
