//! Rational polyphase resampling with a Kaiser-windowed sinc anti-alias filter.

use ndarray::{Array2, Axis};

use super::RawTrial;
use crate::error::{config, Result};

pub const MAX_DENOMINATOR: u64 = 10_000;
pub const KAISER_BETA: f64 = 8.6;
/// Passband edge as a fraction of the lower of the two Nyquist frequencies;
/// the stopband starts at that Nyquist frequency.
pub const PASSBAND_FRACTION: f64 = 0.95;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Express `target / fs` as `up / down` in lowest terms with `down <= 10000`.
pub fn rational_ratio(fs: f64, target: f64) -> Result<(u64, u64)> {
    if !(fs > 0.0 && target > 0.0) || !fs.is_finite() || !target.is_finite() {
        return Err(config(format!(
            "sampling rates must be positive, got {fs} -> {target}"
        )));
    }
    let ratio = target / fs;
    for q in 1..=MAX_DENOMINATOR {
        let p = (ratio * q as f64).round();
        if p >= 1.0 && ((p / q as f64) - ratio).abs() <= 1e-12 * ratio {
            let p = p as u64;
            let g = gcd(p, q);
            return Ok((p / g, q / g));
        }
    }
    Err(config(format!(
        "resampling ratio {target}/{fs} has no rational form with denominator <= {MAX_DENOMINATOR}"
    )))
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Anti-alias FIR at the upsampled rate, scaled by `up` to restore amplitude.
pub(crate) fn design_kernel(up: u64, down: u64) -> Vec<f64> {
    // Work in units of the upsampled rate: input rate = 1/up, output = 1/down.
    let nyq = 0.5 / up.max(down) as f64;
    let pass = PASSBAND_FRACTION * nyq;
    let cutoff = 0.5 * (pass + nyq);
    let transition = nyq - pass;
    let atten = KAISER_BETA / 0.1102 + 8.7;
    let mut len =
        ((atten - 7.95) / (2.285 * 2.0 * std::f64::consts::PI * transition)).ceil() as usize + 1;
    if len.is_multiple_of(2) {
        len += 1;
    }
    let mid = (len - 1) as f64 / 2.0;
    let norm = bessel_i0(KAISER_BETA);
    (0..len)
        .map(|k| {
            let t = k as f64 - mid;
            let arg = 2.0 * cutoff * t;
            let sinc = if t == 0.0 {
                1.0
            } else {
                (std::f64::consts::PI * arg).sin() / (std::f64::consts::PI * arg)
            };
            let r = t / mid;
            let w = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / norm;
            2.0 * cutoff * sinc * w * up as f64
        })
        .collect()
}

/// Output length `round(n * up / down)`.
pub fn output_len(n: usize, up: u64, down: u64) -> usize {
    ((n as f64) * up as f64 / down as f64).round() as usize
}

/// Resample one signal by the rational factor `up / down`, delay-compensated.
pub fn resample_signal(x: &[f64], up: u64, down: u64) -> Vec<f64> {
    if up == down {
        return x.to_vec();
    }
    let kernel = design_kernel(up, down);
    resample_with_kernel(x, up, down, &kernel)
}

fn resample_with_kernel(x: &[f64], up: u64, down: u64, h: &[f64]) -> Vec<f64> {
    let n_out = output_len(x.len(), up, down);
    let len = h.len() as i64;
    let half = (len - 1) / 2;
    let (up, down) = (up as i64, down as i64);
    let last = x.len() as i64 - 1;
    (0..n_out as i64)
        .map(|m| {
            let centre = m * down + half;
            // taps k = centre - i * up must lie in [0, len)
            let i_lo = ((centre - (len - 1)) as f64 / up as f64).ceil() as i64;
            let i_hi = centre.div_euclid(up);
            let mut acc = 0.0;
            for i in i_lo.max(0)..=i_hi.min(last) {
                acc += x[i as usize] * h[(centre - i * up) as usize];
            }
            acc
        })
        .collect()
}

pub fn resample(trial: &RawTrial, target_fs: f64) -> Result<RawTrial> {
    let (up, down) = rational_ratio(trial.fs, target_fs)?;
    if up == down {
        return Ok(RawTrial {
            fs: target_fs,
            ..trial.clone()
        });
    }
    let kernel = design_kernel(up, down);
    let n_out = output_len(trial.n_times(), up, down);
    let mut data = Array2::zeros((n_out, trial.n_channels()));
    for (src, mut dst) in trial.data.axis_iter(Axis(1)).zip(data.axis_iter_mut(Axis(1))) {
        let col: Vec<f64> = src.iter().copied().collect();
        for (d, v) in dst.iter_mut().zip(resample_with_kernel(&col, up, down, &kernel)) {
            *d = v;
        }
    }
    Ok(RawTrial {
        data,
        channel_names: trial.channel_names.clone(),
        coords: trial.coords.clone(),
        fs: target_fs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / fs).sin())
            .collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    /// RMS over the middle half, away from the zero-extended edges.
    fn interior_rms(x: &[f64]) -> f64 {
        let n = x.len();
        rms(&x[n / 4..3 * n / 4])
    }

    #[test]
    fn ratios_reduce() {
        assert_eq!(rational_ratio(256.0, 128.0).unwrap(), (1, 2));
        assert_eq!(rational_ratio(500.0, 128.0).unwrap(), (32, 125));
        assert_eq!(rational_ratio(128.0, 128.0).unwrap(), (1, 1));
        assert_eq!(rational_ratio(1000.0, 128.0).unwrap(), (16, 125));
        assert!(rational_ratio(128.0 * std::f64::consts::PI, 128.0).is_err());
        assert!(rational_ratio(0.0, 128.0).is_err());
    }

    #[test]
    fn halving_length() {
        let y = resample_signal(&vec![0.0; 1024], 1, 2);
        assert_eq!(y.len(), 512);
    }

    #[test]
    fn ten_hertz_rms_preserved() {
        let x = sine(10.0, 500.0, 5000);
        let y = resample_signal(&x, 32, 125);
        assert_eq!(y.len(), 1280);
        let ratio = interior_rms(&y) / interior_rms(&x);
        assert!((ratio - 1.0).abs() < 0.01, "{ratio}");
    }

    #[test]
    fn sixty_hertz_below_new_nyquist_preserved() {
        let x = sine(60.0, 500.0, 5000);
        let y = resample_signal(&x, 32, 125);
        let ratio = interior_rms(&y) / interior_rms(&x);
        assert!((ratio - 1.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn content_above_new_nyquist_is_removed() {
        // 100 Hz would alias to 28 Hz at 128 Hz.
        let x = sine(100.0, 500.0, 5000);
        let y = resample_signal(&x, 32, 125);
        assert!(interior_rms(&y) < 1e-3, "{}", interior_rms(&y));
    }

    #[test]
    fn kernel_is_symmetric() {
        let h = design_kernel(1, 2);
        let n = h.len();
        assert_eq!(n % 2, 1);
        for k in 0..n / 2 {
            assert!((h[k] - h[n - 1 - k]).abs() < 1e-15);
        }
    }
}
