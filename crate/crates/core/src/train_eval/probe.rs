//! Multinomial logistic regression on frozen features.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{LeadError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            epochs: 500,
            lr: 0.5,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    mean: Array1<f64>,
    std: Array1<f64>,
    w: Array2<f64>,
    b: Array1<f64>,
}

fn softmax_rows(mut z: Array2<f64>) -> Array2<f64> {
    for mut row in z.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, v| a.max(*v));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    z
}

impl LinearProbe {
    /// Full-batch gradient descent from zero weights on standardized
    /// features; deterministic.
    pub fn fit(x: &Array2<f64>, y: &[usize], n_classes: usize, cfg: &ProbeConfig) -> Result<Self> {
        if x.nrows() != y.len() || x.nrows() == 0 {
            return Err(LeadError::Shape(format!("{} feature rows for {} labels", x.nrows(), y.len())));
        }
        if let Some(bad) = y.iter().find(|l| **l >= n_classes) {
            return Err(LeadError::Data(format!("label {bad} outside {n_classes} classes")));
        }
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let std = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
        let mut probe = LinearProbe {
            w: Array2::zeros((x.ncols(), n_classes)),
            b: Array1::zeros(n_classes),
            mean,
            std,
        };
        let xs = probe.standardize(x);
        let n = x.nrows() as f64;
        let mut onehot = Array2::<f64>::zeros((x.nrows(), n_classes));
        for (i, &l) in y.iter().enumerate() {
            onehot[[i, l]] = 1.0;
        }
        for _ in 0..cfg.epochs {
            let p = softmax_rows(xs.dot(&probe.w) + &probe.b);
            let d = (p - &onehot) / n;
            let gw = xs.t().dot(&d) + &(&probe.w * cfg.l2);
            let gb = d.sum_axis(Axis(0));
            probe.w.scaled_add(-cfg.lr, &gw);
            probe.b.scaled_add(-cfg.lr, &gb);
        }
        Ok(probe)
    }

    fn standardize(&self, x: &Array2<f64>) -> Array2<f64> {
        (x - &self.mean) / &self.std
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<usize> {
        let z = self.standardize(x).dot(&self.w) + &self.b;
        z.rows().into_iter().map(crate::model::argmax).collect()
    }

    pub fn accuracy(&self, x: &Array2<f64>, y: &[usize]) -> f64 {
        let hits = self.predict(x).iter().zip(y).filter(|(p, t)| p == t).count();
        hits as f64 / y.len().max(1) as f64
    }
}
