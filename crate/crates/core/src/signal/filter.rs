//! Butterworth bandpass in second-order sections, applied forward-backward.

use ndarray::{Array2, ArrayView2, Axis};
use rustfft::num_complex::Complex64;

use super::RawTrial;
use crate::error::{config, Result};

/// Default prototype order; forward-backward application doubles it.
pub const DEFAULT_ORDER: usize = 4;

/// Cascade of biquads `[b0, b1, b2, a1, a2]` with `a0 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ButterworthBandpass {
    sections: Vec<[f64; 5]>,
    fs: f64,
    impulse_len: usize,
}

impl ButterworthBandpass {
    /// Bilinear-transform design of an `order`-pole-pair Butterworth bandpass.
    pub fn design(order: usize, lo: f64, hi: f64, fs: f64) -> Result<Self> {
        if order == 0 {
            return Err(config("filter order must be at least 1"));
        }
        if !(fs > 0.0) {
            return Err(config(format!("sampling rate must be positive, got {fs}")));
        }
        let nyq = fs / 2.0;
        if !(lo > 0.0 && lo < hi) {
            return Err(config(format!("bandpass needs 0 < lo < hi, got {lo}..{hi}")));
        }
        if hi >= nyq {
            return Err(config(format!(
                "bandpass upper edge {hi} Hz is at or above the Nyquist frequency {nyq} Hz"
            )));
        }

        let warp = |f: f64| 2.0 * fs * (std::f64::consts::PI * f / fs).tan();
        let (wl, wh) = (warp(lo), warp(hi));
        // Widen the prototype so each pass is -1.5 dB at the requested edges,
        // putting the forward-backward -3 dB points on `lo` and `hi`.
        let edge = (10f64.powf(0.15) - 1.0).powf(1.0 / (2 * order) as f64);
        let bw = (wh - wl) / edge;
        let w0sq = wl * wh;
        let two_fs = 2.0 * fs;

        let mut poles = Vec::with_capacity(2 * order);
        for k in 1..=order {
            let theta =
                std::f64::consts::PI * (2 * k + order - 1) as f64 / (2 * order) as f64;
            let p = Complex64::from_polar(1.0, theta);
            let a = p * (bw / 2.0);
            let d = (a * a - w0sq).sqrt();
            for s in [a + d, a - d] {
                poles.push((two_fs + s) / (two_fs - s));
            }
        }

        let mut denominators: Vec<[f64; 2]> = Vec::with_capacity(order);
        let mut reals = Vec::new();
        for p in &poles {
            if p.im > 1e-12 {
                denominators.push([-2.0 * p.re, p.norm_sqr()]);
            } else if p.im.abs() <= 1e-12 {
                reals.push(p.re);
            }
        }
        reals.sort_by(f64::total_cmp);
        for pair in reals.chunks(2) {
            match *pair {
                [r1, r2] => denominators.push([-(r1 + r2), r1 * r2]),
                [r] => denominators.push([-r, 0.0]),
                _ => unreachable!(),
            }
        }
        debug_assert_eq!(denominators.len(), order);

        let mut sections: Vec<[f64; 5]> = denominators
            .into_iter()
            .map(|[a1, a2]| [1.0, 0.0, -1.0, a1, a2])
            .collect();

        // Unit gain at the (warped) geometric centre frequency.
        let wc = 2.0 * (w0sq.sqrt() / two_fs).atan();
        let mut filter = ButterworthBandpass {
            sections,
            fs,
            impulse_len: 0,
        };
        let g = filter.response_at_omega(wc).norm();
        let per_section = g.powf(-1.0 / order as f64);
        sections = filter.sections;
        for s in &mut sections {
            s[0] *= per_section;
            s[1] *= per_section;
            s[2] *= per_section;
        }
        filter.sections = sections;
        filter.impulse_len = filter.measure_impulse_len();
        Ok(filter)
    }

    pub fn sections(&self) -> &[[f64; 5]] {
        &self.sections
    }

    fn response_at_omega(&self, omega: f64) -> Complex64 {
        let zi = Complex64::from_polar(1.0, -omega);
        let zi2 = zi * zi;
        self.sections.iter().fold(Complex64::new(1.0, 0.0), |acc, s| {
            let num = s[0] + zi * s[1] + zi2 * s[2];
            let den = 1.0 + zi * s[3] + zi2 * s[4];
            acc * num / den
        })
    }

    /// Single-pass complex response at `freq` Hz.
    pub fn response(&self, freq: f64) -> Complex64 {
        self.response_at_omega(2.0 * std::f64::consts::PI * freq / self.fs)
    }

    /// Magnitude of the forward-backward response (squared single-pass gain).
    pub fn zero_phase_gain(&self, freq: f64) -> f64 {
        self.response(freq).norm_sqr()
    }

    /// Samples until the impulse response stays below 1e-4 of its peak.
    pub fn impulse_len(&self) -> usize {
        self.impulse_len
    }

    fn measure_impulse_len(&self) -> usize {
        let cap = (60.0 * self.fs) as usize;
        let mut state = vec![[0.0; 2]; self.sections.len()];
        let mut peak = 0.0f64;
        let mut last_big = 0;
        let mut buf = [0.0];
        for k in 0..cap {
            buf[0] = if k == 0 { 1.0 } else { 0.0 };
            self.run(&mut buf, &mut state);
            let v = buf[0].abs();
            peak = peak.max(v);
            if v >= 1e-4 * peak {
                last_big = k;
            } else if k > last_big + self.fs as usize {
                break;
            }
        }
        last_big + 1
    }

    /// Edge extension length used by [`Self::filtfilt`]: three impulse lengths.
    pub fn pad_len(&self) -> usize {
        3 * self.impulse_len()
    }

    /// Steady-state state vectors for a unit step input.
    fn step_state(&self) -> Vec<[f64; 2]> {
        let mut scale = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let dc = (s[0] + s[1] + s[2]) / (1.0 + s[3] + s[4]);
                let z = [(dc - s[0]) * scale, (s[2] - s[4] * dc) * scale];
                scale *= dc;
                z
            })
            .collect()
    }

    fn run(&self, x: &mut [f64], state: &mut [[f64; 2]]) {
        for (s, z) in self.sections.iter().zip(state.iter_mut()) {
            for v in x.iter_mut() {
                let input = *v;
                let y = s[0] * input + z[0];
                z[0] = s[1] * input - s[3] * y + z[1];
                z[1] = s[2] * input - s[4] * y;
                *v = y;
            }
        }
    }

    /// Zero-phase filtering with mirror reflection at both edges and
    /// steady-state initial conditions.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        self.filtfilt_padded(x, self.pad_len())
    }

    pub(crate) fn filtfilt_padded(&self, x: &[f64], pad: usize) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = pad.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        for i in (1..=pad).rev() {
            ext.push(x[i]);
        }
        ext.extend_from_slice(x);
        for i in 1..=pad {
            ext.push(x[n - 1 - i]);
        }

        let zi = self.step_state();
        let mut state: Vec<[f64; 2]> = zi.iter().map(|z| [z[0] * ext[0], z[1] * ext[0]]).collect();
        self.run(&mut ext, &mut state);
        ext.reverse();
        let mut state: Vec<[f64; 2]> = zi.iter().map(|z| [z[0] * ext[0], z[1] * ext[0]]).collect();
        self.run(&mut ext, &mut state);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}

/// Filter every column of a time-major matrix.
pub fn bandpass_matrix(
    data: ArrayView2<'_, f64>,
    lo: f64,
    hi: f64,
    fs: f64,
    order: usize,
) -> Result<Array2<f64>> {
    let filter = ButterworthBandpass::design(order, lo, hi, fs)?;
    let mut out = Array2::zeros(data.raw_dim());
    for (src, mut dst) in data.axis_iter(Axis(1)).zip(out.axis_iter_mut(Axis(1))) {
        let col: Vec<f64> = src.iter().copied().collect();
        for (d, v) in dst.iter_mut().zip(filter.filtfilt(&col)) {
            *d = v;
        }
    }
    Ok(out)
}

/// Zero-phase bandpass of every channel of a trial.
pub fn bandpass(trial: &RawTrial, lo: f64, hi: f64) -> Result<RawTrial> {
    let data = bandpass_matrix(trial.data.view(), lo, hi, trial.fs, DEFAULT_ORDER)?;
    Ok(RawTrial {
        data,
        ..trial.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn db(g: f64) -> f64 {
        20.0 * g.log10()
    }

    fn sine(freq: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / fs).sin())
            .collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn design_meets_band_contract() {
        for &(lo, hi, fs) in &[(0.5, 45.0, 128.0), (4.0, 7.0, 128.0), (12.0, 30.0, 128.0), (30.0, 45.0, 128.0)] {
            let f = ButterworthBandpass::design(DEFAULT_ORDER, lo, hi, fs).unwrap();
            let (p0, p1) = (2.0 * lo, 0.9 * hi);
            if p0 < p1 {
                for k in 0..=50 {
                    let freq = p0 + (p1 - p0) * k as f64 / 50.0;
                    let g = db(f.zero_phase_gain(freq));
                    assert!(g.abs() <= 1.0, "{lo}-{hi}@{fs}: {freq} Hz gain {g} dB");
                }
            }
            assert!(db(f.zero_phase_gain(lo / 5.0)) <= -20.0);
            let upper = (1.25 * hi).min(0.98 * fs / 2.0);
            assert!(db(f.zero_phase_gain(upper)) <= -20.0, "{lo}-{hi}@{fs} stop {upper}");
        }
    }

    #[test]
    fn rejects_upper_edge_at_nyquist() {
        assert!(ButterworthBandpass::design(4, 0.5, 64.0, 128.0).is_err());
        assert!(ButterworthBandpass::design(4, 5.0, 4.0, 128.0).is_err());
        assert!(ButterworthBandpass::design(4, 0.0, 4.0, 128.0).is_err());
    }

    #[test]
    fn passes_ten_hertz_and_rejects_point_one() {
        let fs = 128.0;
        let f = ButterworthBandpass::design(DEFAULT_ORDER, 0.5, 45.0, fs).unwrap();
        let x = sine(10.0, fs, 1280);
        let y = f.filtfilt(&x);
        assert!(db(rms(&y) / rms(&x)).abs() <= 1.0);

        let x = sine(0.1, fs, 128 * 60);
        let y = f.filtfilt(&x);
        assert!(db(rms(&y) / rms(&x)) <= -20.0, "{}", db(rms(&y) / rms(&x)));
    }

    #[test]
    fn zero_in_zero_out_and_zero_phase() {
        let f = ButterworthBandpass::design(DEFAULT_ORDER, 0.5, 45.0, 128.0).unwrap();
        assert!(f.filtfilt(&[0.0; 300]).iter().all(|&v| v == 0.0));
        // A passband sine keeps its phase: peak-to-peak alignment in the interior.
        let x = sine(10.0, 128.0, 1280);
        let y = f.filtfilt(&x);
        let err = x[200..1000]
            .iter()
            .zip(&y[200..1000])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 0.02, "{err}");
    }

    #[test]
    fn short_inputs_do_not_panic() {
        let f = ButterworthBandpass::design(DEFAULT_ORDER, 4.0, 7.0, 128.0).unwrap();
        assert_eq!(f.filtfilt(&[1.0]).len(), 1);
        assert_eq!(f.filtfilt(&[]).len(), 0);
        assert_eq!(f.filtfilt(&sine(5.0, 128.0, 20)).len(), 20);
    }
}
