//! AdamW, cosine annealing, global-norm clipping and weight averaging.

use ndarray::Array2;

use crate::error::{config, Result};
use crate::model::ParameterSet;
use crate::Scalar;

/// Decoupled-weight-decay Adam.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u32,
    m: Vec<Array2<T>>,
    v: Vec<Array2<T>>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(params: &ParameterSet<T>, weight_decay: f64) -> Self {
        let zeros = |p: &ParameterSet<T>| p.tensors().iter().map(|t| Array2::zeros(t.raw_dim())).collect();
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: zeros(params),
            v: zeros(params),
        }
    }

    pub fn steps_taken(&self) -> u32 {
        self.step
    }

    /// One update. Parameters without a gradient are left alone. With
    /// `lr == 0` the moments advance but parameters are not touched.
    pub fn step(&mut self, params: &mut ParameterSet<T>, grads: &[Option<Array2<T>>], lr: f64) {
        self.step += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::of(1.0 - self.beta1.powi(self.step as i32));
        let c2 = T::of(1.0 - self.beta2.powi(self.step as i32));
        let (eps, lr_t, decay) = (T::of(self.eps), T::of(lr), T::of(1.0 - lr * self.weight_decay));
        for (k, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            ndarray::Zip::from(&mut *m)
                .and(&mut *v)
                .and(g)
                .for_each(|m, v, &g| {
                    *m = b1 * *m + (T::one() - b1) * g;
                    *v = b2 * *v + (T::one() - b2) * g * g;
                });
            if lr == 0.0 {
                continue;
            }
            ndarray::Zip::from(&mut params.tensors_mut()[k])
                .and(&*m)
                .and(&*v)
                .for_each(|p, &m, &v| {
                    let update = (m / c1) / ((v / c2).sqrt() + eps);
                    *p = *p * decay - lr_t * update;
                });
        }
    }
}

/// `lr0 * (1 + cos(pi * epoch / total)) / 2`; reaches zero at `epoch == total`.
pub fn cosine_lr(lr0: f64, epoch: usize, total: usize) -> f64 {
    if total == 0 {
        return lr0;
    }
    let frac = (epoch.min(total) as f64) / total as f64;
    0.5 * lr0 * (1.0 + (std::f64::consts::PI * frac).cos())
}

pub fn global_norm<T: Scalar>(grads: &[Option<Array2<T>>]) -> f64 {
    grads
        .iter()
        .flatten()
        .flat_map(|g| g.iter())
        .map(|v| {
            let x = v.to_f64_lossy();
            x * x
        })
        .sum::<f64>()
        .sqrt()
}

/// Rescale so the global norm is at most `max_norm`. Returns the norm before
/// clipping.
pub fn clip_grad_norm<T: Scalar>(grads: &mut [Option<Array2<T>>], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let scale = T::of(max_norm / (norm + 1e-6));
        for g in grads.iter_mut().flatten() {
            g.mapv_inplace(|v| v * scale);
        }
    }
    norm
}

/// Equal-weight mean of parameter snapshots.
pub fn apply_swa<T: Scalar>(history: &[&ParameterSet<T>]) -> Result<ParameterSet<T>> {
    if history.is_empty() {
        return Err(config("weight averaging needs at least one snapshot"));
    }
    ParameterSet::average(history)
}

/// Running equal-weight average, accumulated in f64.
#[derive(Debug, Clone, Default)]
pub struct SwaAccumulator {
    sum: Option<ParameterSet<f64>>,
    count: usize,
}

impl SwaAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn add<T: Scalar>(&mut self, params: &ParameterSet<T>) {
        match &mut self.sum {
            None => self.sum = Some(params.cast()),
            Some(sum) => {
                for (acc, t) in sum.tensors_mut().iter_mut().zip(params.tensors()) {
                    ndarray::Zip::from(acc).and(t).for_each(|a, v| *a += v.to_f64_lossy());
                }
            }
        }
        self.count += 1;
    }

    pub fn average<T: Scalar>(&self) -> Result<ParameterSet<T>> {
        let sum = self
            .sum
            .as_ref()
            .ok_or_else(|| config("weight averaging needs at least one snapshot"))?;
        let n = self.count as f64;
        let mut out = sum.clone();
        for t in out.tensors_mut() {
            t.mapv_inplace(|v| v / n);
        }
        Ok(out.cast())
    }
}
