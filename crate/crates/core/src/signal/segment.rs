use ndarray::{Array2, ArrayView2, Axis, s};

use crate::error::{config, data, Result};
use crate::scalar::Scalar;

/// Floor on the per-channel standard deviation; constant channels map to zero.
pub const NORM_EPS: f64 = 1e-8;

/// Number of full windows: `floor((t - win) / stride) + 1`, or 0 when `t < win`.
pub fn window_count(t: usize, win: usize, stride: usize) -> usize {
    if win == 0 || stride == 0 || t < win {
        0
    } else {
        (t - win) / stride + 1
    }
}

/// Cut time-major `data` into windows starting at `0, stride, 2*stride, ...`.
/// A trailing partial window is dropped.
pub fn segment<T: Clone>(data: ArrayView2<'_, T>, win: usize, stride: usize) -> Result<Vec<Array2<T>>> {
    if win == 0 {
        return Err(config("window length must be positive"));
    }
    if stride == 0 || stride > win {
        return Err(config(format!(
            "stride must satisfy 0 < stride <= win, got stride {stride} for win {win}"
        )));
    }
    let n = window_count(data.nrows(), win, stride);
    Ok((0..n)
        .map(|k| data.slice(s![k * stride..k * stride + win, ..]).to_owned())
        .collect())
}

/// Standardize each channel (column) to zero mean and unit population
/// standard deviation. Channels whose deviation is below [`NORM_EPS`] become
/// all zeros.
pub fn normalize<T: Scalar>(x: ArrayView2<'_, T>) -> Result<Array2<T>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(data("cannot normalize a window with non-finite values"));
    }
    let n = x.nrows() as f64;
    let mut out = Array2::zeros(x.raw_dim());
    if x.nrows() == 0 {
        return Ok(out);
    }
    for (src, mut dst) in x.axis_iter(Axis(1)).zip(out.axis_iter_mut(Axis(1))) {
        let mean = src.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / n;
        let var = src
            .iter()
            .map(|v| (v.to_f64_lossy() - mean).powi(2))
            .sum::<f64>()
            / n;
        let std = var.sqrt();
        if std < NORM_EPS {
            continue;
        }
        for (d, v) in dst.iter_mut().zip(src.iter()) {
            *d = T::of((v.to_f64_lossy() - mean) / std);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use proptest::prelude::*;

    /// Enumerate window starts directly.
    fn brute_force_count(t: usize, win: usize, stride: usize) -> usize {
        let mut count = 0;
        let mut start = 0;
        while start + win <= t {
            count += 1;
            start += stride;
        }
        count
    }

    #[test]
    fn count_matches_enumerator_exhaustively() {
        for t in 0..=512 {
            for win in [1, 2, 3, 7, 16, 64, 100, 128, 256, 512] {
                for stride in 1..=win {
                    if win > 128 && stride % 17 != 0 && stride != win {
                        continue;
                    }
                    assert_eq!(window_count(t, win, stride), brute_force_count(t, win, stride));
                }
            }
        }
    }

    #[test]
    fn adfsu_arithmetic() {
        assert_eq!(window_count(1024, 128, 64), 15);
        assert_eq!(15 * 2 * 92, 2760);
        assert_eq!(window_count(128, 128, 128), 1);
        assert_eq!(window_count(127, 128, 128), 0);
    }

    #[test]
    fn windows_start_at_stride_multiples() {
        let x = Array2::from_shape_fn((10, 2), |(i, j)| (i * 10 + j) as f64);
        let w = segment(x.view(), 4, 3).unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(w[1][[0, 0]], 30.0);
        assert_eq!(w[2][[3, 1]], 91.0);
        assert!(segment(x.view(), 4, 5).is_err());
        assert!(segment(x.view(), 0, 1).is_err());
    }

    #[test]
    fn closed_form_channel() {
        let x = arr2(&[[1.0f64], [2.0], [3.0], [4.0]]);
        let y = normalize(x.view()).unwrap();
        let s = 1.25f64.sqrt();
        for (i, v) in y.iter().enumerate() {
            assert!((v - (i as f64 + 1.0 - 2.5) / s).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_channel_becomes_zero() {
        let x = Array2::from_elem((128, 1), 5.0f32);
        assert!(normalize(x.view()).unwrap().iter().all(|&v| v == 0.0));
        let x = Array2::from_elem((128, 1), 0.1f64);
        assert!(normalize(x.view()).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_finite_is_rejected() {
        let x = arr2(&[[1.0f32], [f32::NAN]]);
        assert!(normalize(x.view()).is_err());
    }

    proptest! {
        #[test]
        fn statistics_and_affine_invariance(
            vals in proptest::collection::vec(-100.0f64..100.0, 128 * 19),
            alpha in 0.01f64..50.0,
            beta in -100.0f64..100.0,
        ) {
            let x = Array2::from_shape_vec((128, 19), vals).unwrap();
            let y = normalize(x.view()).unwrap();
            for col in y.axis_iter(Axis(1)) {
                let mean = col.sum() / 128.0;
                let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 128.0).sqrt();
                prop_assert!(mean.abs() < 1e-5);
                prop_assert!((std - 1.0).abs() < 1e-4);
            }
            let z = normalize(x.mapv(|v| alpha * v + beta).view()).unwrap();
            for (a, b) in y.iter().zip(z.iter()) {
                prop_assert!((a - b).abs() < 1e-8);
            }
            let yf = normalize(x.mapv(|v| v as f32).view()).unwrap();
            for col in yf.axis_iter(Axis(1)) {
                let mean = col.iter().map(|v| *v as f64).sum::<f64>() / 128.0;
                prop_assert!(mean.abs() < 1e-5);
            }
        }
    }
}
