//! Augmentation bank and two-view generation for contrastive pre-training.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::index;
use rand::Rng as _;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{config, LeadError, Result};
use crate::rng::Rng;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentKind {
    Flip,
    TMask,
    FMask,
    CMask,
    Jitter,
    Dropout,
}

impl AugmentKind {
    pub const ALL: [AugmentKind; 6] = [
        AugmentKind::Flip,
        AugmentKind::TMask,
        AugmentKind::FMask,
        AugmentKind::CMask,
        AugmentKind::Jitter,
        AugmentKind::Dropout,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AugmentKind::Flip => "flip",
            AugmentKind::TMask => "tmask",
            AugmentKind::FMask => "fmask",
            AugmentKind::CMask => "cmask",
            AugmentKind::Jitter => "jitter",
            AugmentKind::Dropout => "dropout",
        }
    }
}

impl fmt::Display for AugmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AugmentKind {
    type Err = LeadError;

    fn from_str(s: &str) -> Result<Self> {
        AugmentKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| config(format!("unknown augmentation kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationParams {
    pub flip_prob: f64,
    /// Shared by temporal, frequency and channel masking and by dropout.
    pub mask_ratio: f64,
    pub jitter_scale: f64,
    pub enabled_kinds: Vec<AugmentKind>,
}

impl Default for AugmentationParams {
    fn default() -> Self {
        AugmentationParams {
            flip_prob: 0.5,
            mask_ratio: 0.1,
            jitter_scale: 0.1,
            enabled_kinds: AugmentKind::ALL.to_vec(),
        }
    }
}

impl AugmentationParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("flip_prob", self.flip_prob), ("mask_ratio", self.mask_ratio)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.jitter_scale >= 0.0) || !self.jitter_scale.is_finite() {
            return Err(config(format!(
                "jitter_scale must be non-negative, got {}",
                self.jitter_scale
            )));
        }
        if self.enabled_kinds.is_empty() {
            return Err(config("enabled_kinds is empty"));
        }
        Ok(())
    }
}

fn mask_count(ratio: f64, n: usize) -> usize {
    ((ratio * n as f64).ceil() as usize).min(n)
}

/// Real-input DFT of `x`, zero the listed one-sided bins (and their mirrors),
/// inverse transform. Returns the complex inverse so callers can inspect the
/// imaginary residue.
pub(crate) fn fmask_channel(x: &[f64], bins: &[usize]) -> Vec<Complex64> {
    let n = x.len();
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let zero = Complex64::new(0.0, 0.0);
    for &k in bins {
        buf[k] = zero;
        if k != 0 {
            buf[n - k] = zero;
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c / n as f64).collect()
}

/// Apply one augmentation to a `T x C` window.
pub fn apply<T: Scalar>(
    x: &Array2<T>,
    kind: AugmentKind,
    params: &AugmentationParams,
    rng: &mut Rng,
) -> Result<Array2<T>> {
    if !params.enabled_kinds.contains(&kind) {
        return Err(config(format!("augmentation {kind} is not enabled")));
    }
    let (t, c) = x.dim();
    let mut out = x.clone();
    match kind {
        AugmentKind::Flip => {
            if rng.random_bool(params.flip_prob) {
                out.invert_axis(ndarray::Axis(0));
                out = out.as_standard_layout().into_owned();
            }
        }
        AugmentKind::TMask => {
            for i in index::sample(rng, t, mask_count(params.mask_ratio, t)) {
                out.row_mut(i).fill(T::zero());
            }
        }
        AugmentKind::CMask => {
            for j in index::sample(rng, c, mask_count(params.mask_ratio, c)) {
                out.column_mut(j).fill(T::zero());
            }
        }
        AugmentKind::FMask => {
            if t > 0 {
                let n_bins = t / 2 + 1;
                let bins = index::sample(rng, n_bins, mask_count(params.mask_ratio, n_bins)).into_vec();
                if !bins.is_empty() {
                    for j in 0..c {
                        let col: Vec<f64> = x.column(j).iter().map(|v| v.to_f64_lossy()).collect();
                        for (i, v) in fmask_channel(&col, &bins).into_iter().enumerate() {
                            out[[i, j]] = T::of(v.re);
                        }
                    }
                }
            }
        }
        AugmentKind::Jitter => {
            let scale = params.jitter_scale;
            for v in out.iter_mut() {
                *v += T::of(rng.random::<f64>() * scale);
            }
        }
        AugmentKind::Dropout => {
            let p = params.mask_ratio;
            for v in out.iter_mut() {
                if rng.random_bool(p) {
                    *v = T::zero();
                }
            }
        }
    }
    Ok(out)
}

/// Pick one enabled kind uniformly.
pub fn draw_kind(params: &AugmentationParams, rng: &mut Rng) -> Result<AugmentKind> {
    if params.enabled_kinds.is_empty() {
        return Err(config("enabled_kinds is empty"));
    }
    Ok(params.enabled_kinds[rng.random_range(0..params.enabled_kinds.len())])
}

/// Two views, each from an independently drawn kind.
pub fn make_views<T: Scalar>(
    x: &Array2<T>,
    params: &AugmentationParams,
    rng: &mut Rng,
) -> Result<(Array2<T>, Array2<T>)> {
    let ka = draw_kind(params, rng)?;
    let a = apply(x, ka, params, rng)?;
    let kb = draw_kind(params, rng)?;
    let b = apply(x, kb, params, rng)?;
    Ok((a, b))
}
