//! Synthetic EEG corpus with a controllable class signal.
//!
//! Each channel is synthesized in the frequency domain as the sum of
//! band-limited background activity (per-band power scaled per class), a
//! per-subject spectral fingerprint made of a few narrow Gaussian peaks, and
//! white noise. Background and fingerprint share a source across channels with
//! coherence `coherence`, so channels are correlated the way scalp EEG is.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand_distr::{Distribution, LogNormal, Normal, StandardNormal, Uniform};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{raw::RawRecording, Corpus, SubjectWindows};
use crate::error::{config, Result};
use crate::rng;
use crate::signal::{montage::canonical_name, preprocess_trial, FrequencyBand, Montage, PrepConfig, STANDARD_19};

pub const FS: f64 = 128.0;

/// Background power per rhythm before class multipliers.
const BASE_POWER: [(FrequencyBand, f64); 5] = [
    (FrequencyBand::Delta, 1.0),
    (FrequencyBand::Theta, 1.0),
    (FrequencyBand::Alpha, 1.5),
    (FrequencyBand::Beta, 1.0),
    (FrequencyBand::Gamma, 0.5),
];

const FINGERPRINT_PEAKS: usize = 3;
const PEAK_WIDTH_HZ: f64 = 0.75;
const CHANNEL_GAIN_SIGMA: f64 = 0.3;

/// Synthesis bands are contiguous so no bin between rhythms is left silent.
fn synth_edges(band: FrequencyBand) -> (f64, f64) {
    match band {
        FrequencyBand::Alpha => (7.0, 12.0),
        b => b.edges(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub dataset_id: String,
    pub n_subjects: usize,
    /// Class names in label order.
    pub class_names: Vec<String>,
    /// class name -> band name -> power multiplier. Missing entries mean 1.
    pub class_band_power: BTreeMap<String, BTreeMap<String, f64>>,
    /// Channels carrying the class multipliers; empty means all 19.
    pub class_channels: Vec<String>,
    pub subject_nuisance_strength: f64,
    pub trial_seconds: f64,
    /// Fraction of each component's variance shared across channels.
    pub coherence: f64,
    pub white_noise_std: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let mut ad = BTreeMap::new();
        ad.insert("delta".to_string(), 2.0);
        ad.insert("theta".to_string(), 2.0);
        let mut class_band_power = BTreeMap::new();
        class_band_power.insert("AD".to_string(), ad);
        SynthSpec {
            dataset_id: "synth".to_string(),
            n_subjects: 60,
            class_names: vec!["HC".to_string(), "AD".to_string()],
            class_band_power,
            class_channels: Vec::new(),
            subject_nuisance_strength: 0.5,
            trial_seconds: 60.0,
            coherence: 0.6,
            white_noise_std: 0.5,
            seed: 41,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects < 4 {
            return Err(config(format!(
                "synthetic corpus needs at least 4 subjects, got {}",
                self.n_subjects
            )));
        }
        if self.class_names.len() < 2 {
            return Err(config("synthetic corpus needs at least two classes"));
        }
        if self.dataset_id.trim().is_empty() {
            return Err(config("dataset_id is empty"));
        }
        for (class, bands) in &self.class_band_power {
            if !self.class_names.contains(class) {
                return Err(config(format!("class_band_power names unknown class {class}")));
            }
            for (band, m) in bands {
                let b: FrequencyBand = band.parse()?;
                if b == FrequencyBand::All {
                    return Err(config("class_band_power takes individual rhythms, not 'all'"));
                }
                if !(*m > 0.0) || !m.is_finite() {
                    return Err(config(format!(
                        "multiplier for {class}/{band} must be positive, got {m}"
                    )));
                }
            }
        }
        for ch in &self.class_channels {
            if !STANDARD_19.iter().any(|s| canonical_name(s) == canonical_name(ch)) {
                return Err(config(format!("class channel {ch} is not a montage channel")));
            }
        }
        if !(self.subject_nuisance_strength >= 0.0) || !self.subject_nuisance_strength.is_finite() {
            return Err(config("subject_nuisance_strength must be non-negative"));
        }
        if !(self.trial_seconds >= 1.0) || !self.trial_seconds.is_finite() {
            return Err(config("trial_seconds must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.coherence) {
            return Err(config("coherence must lie in [0, 1]"));
        }
        if !(self.white_noise_std >= 0.0) || !self.white_noise_std.is_finite() {
            return Err(config("white_noise_std must be non-negative"));
        }
        Ok(())
    }

    pub fn n_times(&self) -> usize {
        (self.trial_seconds * FS).round() as usize
    }

    pub fn label_of(&self, subject_id: u32) -> u32 {
        (subject_id - 1) % self.class_names.len() as u32
    }

    fn multiplier(&self, label: u32, band: FrequencyBand) -> f64 {
        self.class_band_power
            .get(&self.class_names[label as usize])
            .and_then(|m| m.get(band.name()))
            .copied()
            .unwrap_or(1.0)
    }

    fn carries_class(&self, channel: &str) -> bool {
        self.class_channels.is_empty()
            || self
                .class_channels
                .iter()
                .any(|c| canonical_name(c) == canonical_name(channel))
    }
}

fn subject_stream(spec: &SynthSpec, subject_id: u32) -> rng::Rng {
    rng::stream(
        spec.seed,
        "synth",
        &[rng::hash_str(&spec.dataset_id), u64::from(subject_id)],
    )
}

/// Expected one-sided spectrum of one subject: coefficient variance per
/// channel (rows) and rFFT bin (columns), scaled so that `x = ifft(X) / n`
/// has the intended time-domain variance per component. White noise is not
/// included. Consumes the fingerprint draws from `rng`.
fn expected_spectrum(spec: &SynthSpec, label: u32, rng: &mut rng::Rng) -> Array2<f64> {
    let n = spec.n_times();
    let n_bins = n / 2 + 1;
    let freq = |k: usize| k as f64 * FS / n as f64;
    let in_band = |k: usize, (lo, hi): (f64, f64)| {
        let f = freq(k);
        k > 0 && 2 * k != n && f >= lo && f < hi
    };
    let nn = (n * n) as f64;
    let mut out = Array2::zeros((STANDARD_19.len(), n_bins));

    for (band, base) in BASE_POWER {
        let edges = synth_edges(band);
        let bins: Vec<usize> = (0..n_bins).filter(|&k| in_band(k, edges)).collect();
        if bins.is_empty() {
            continue;
        }
        for (c, name) in STANDARD_19.iter().enumerate() {
            let m = if spec.carries_class(name) {
                spec.multiplier(label, band)
            } else {
                1.0
            };
            let v = nn * base * m / (2.0 * bins.len() as f64);
            for &k in &bins {
                out[[c, k]] += v;
            }
        }
    }

    let centre = Uniform::new(1.0, 40.0).expect("valid range");
    let centres: Vec<f64> = (0..FINGERPRINT_PEAKS).map(|_| centre.sample(rng)).collect();
    let gain_dist = LogNormal::new(0.0, CHANNEL_GAIN_SIGMA).expect("valid sigma");
    let mut gains: Vec<f64> = (0..STANDARD_19.len()).map(|_| gain_dist.sample(rng)).collect();
    let mean_sq = gains.iter().map(|g| g * g).sum::<f64>() / gains.len() as f64;
    gains.iter_mut().for_each(|g| *g /= mean_sq.sqrt());

    let passband = (FrequencyBand::All.edges().0, FrequencyBand::All.edges().1);
    let shape: Vec<f64> = (0..n_bins)
        .map(|k| {
            if !in_band(k, passband) {
                return 0.0;
            }
            centres
                .iter()
                .map(|c| (-(freq(k) - c).powi(2) / (2.0 * PEAK_WIDTH_HZ * PEAK_WIDTH_HZ)).exp())
                .sum()
        })
        .collect();
    let total: f64 = shape.iter().sum();
    let p_total: f64 = BASE_POWER.iter().map(|(_, p)| p).sum();
    let var = spec.subject_nuisance_strength.powi(2) * p_total;
    if total > 0.0 && var > 0.0 {
        for c in 0..STANDARD_19.len() {
            let g2 = gains[c] * gains[c];
            for k in 0..n_bins {
                out[[c, k]] += nn * var * g2 * shape[k] / (2.0 * total);
            }
        }
    }
    out
}

fn complex_normal(rng: &mut rng::Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// One subject's continuous 19-channel trial at 128 Hz, time-major.
pub fn synth_trial(spec: &SynthSpec, subject_id: u32) -> Result<Array2<f64>> {
    spec.validate()?;
    if subject_id == 0 || subject_id as usize > spec.n_subjects {
        return Err(config(format!("subject {subject_id} outside 1..={}", spec.n_subjects)));
    }
    let label = spec.label_of(subject_id);
    let mut rng = subject_stream(spec, subject_id);
    let variance = expected_spectrum(spec, label, &mut rng);
    let n = spec.n_times();
    let n_bins = n / 2 + 1;
    let c_count = STANDARD_19.len();

    let rho = spec.coherence;
    let (w_shared, w_own) = (rho.sqrt(), (1.0 - rho).sqrt());
    let shared: Vec<Complex64> = (0..n_bins).map(|_| complex_normal(&mut rng)).collect();
    let fft = FftPlanner::new().plan_fft_inverse(n);
    let noise = Normal::new(0.0, spec.white_noise_std).expect("validated std");
    let mut out = Array2::zeros((n, c_count));
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for c in 0..c_count {
        buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        for k in 1..n_bins {
            let v = variance[[c, k]];
            let z = shared[k] * w_shared + complex_normal(&mut rng) * w_own;
            if v == 0.0 {
                continue;
            }
            let coef = z * v.sqrt();
            if 2 * k == n {
                buf[k] = Complex64::new(coef.re, 0.0);
            } else {
                buf[k] = coef;
                buf[n - k] = coef.conj();
            }
        }
        fft.process(&mut buf);
        for t in 0..n {
            out[[t, c]] = buf[t].re / n as f64;
        }
    }
    for v in out.iter_mut() {
        *v += noise.sample(&mut rng);
    }
    Ok(out)
}

/// Raw 128 Hz recordings for every subject, named by the standard montage.
pub fn synth_raw(spec: &SynthSpec) -> Result<Vec<RawRecording>> {
    spec.validate()?;
    (1..=spec.n_subjects as u32)
        .map(|id| {
            Ok(RawRecording {
                subject_id: id,
                label: spec.label_of(id),
                fs: FS,
                channel_names: STANDARD_19.iter().map(|s| s.to_string()).collect(),
                data: synth_trial(spec, id)?.mapv(|v| v as f32),
            })
        })
        .collect()
}

/// Generate, preprocess and window a full synthetic corpus.
pub fn synth_generate(spec: &SynthSpec) -> Result<Corpus> {
    synth_generate_with(spec, &PrepConfig::default())
}

pub fn synth_generate_with(spec: &SynthSpec, prep: &PrepConfig) -> Result<Corpus> {
    spec.validate()?;
    let montage = Montage::standard();
    let mut subjects = Vec::with_capacity(spec.n_subjects);
    for rec in synth_raw(spec)? {
        let trial = rec.to_trial(&montage)?;
        subjects.push(SubjectWindows {
            subject_id: rec.subject_id,
            label: rec.label,
            windows: preprocess_trial(&trial, prep, &montage)?,
        });
    }
    let provenance = vec![format!(
        "synthetic: seed={} n_subjects={} nuisance={} trial_seconds={}",
        spec.seed, spec.n_subjects, spec.subject_nuisance_strength, spec.trial_seconds
    )];
    Corpus::from_subjects(&spec.dataset_id, &spec.class_names, prep.win, subjects, provenance)
}
