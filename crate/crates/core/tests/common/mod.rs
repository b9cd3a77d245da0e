//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use lead_core::model::{Model, ModelConfig};
use lead_core::rng;
use ndarray::Array2;
use rand::Rng as _;

/// Cosine similarity written out with plain loops.
pub fn cos(u: &[f64], v: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for i in 0..u.len() {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    dot / (nu.sqrt().max(1e-12) * nv.sqrt().max(1e-12))
}

fn rows(z: &Array2<f64>) -> Vec<Vec<f64>> {
    z.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// `-log(exp(s_ik/tau) / sum_j exp(s_ij/tau))` computed term by term.
fn neg_log_ratio(a: &[Vec<f64>], b: &[Vec<f64>], i: usize, k: usize, tau: f64) -> f64 {
    let num = (cos(&a[i], &b[k]) / tau).exp();
    let mut den = 0.0;
    for bj in b {
        den += (cos(&a[i], bj) / tau).exp();
    }
    -(num / den).ln()
}

pub fn oracle_sample_loss(za: &Array2<f64>, zb: &Array2<f64>, tau: f64) -> f64 {
    let (a, b) = (rows(za), rows(zb));
    let mut total = 0.0;
    for i in 0..a.len() {
        total += neg_log_ratio(&a, &b, i, i, tau);
    }
    total / a.len() as f64
}

pub fn oracle_subject_loss(za: &Array2<f64>, zb: &Array2<f64>, ids: &[u32], tau: f64) -> f64 {
    let (a, b) = (rows(za), rows(zb));
    let mut total = 0.0;
    for i in 0..a.len() {
        let mut inner = 0.0;
        let mut count = 0.0;
        for k in 0..b.len() {
            if ids[k] == ids[i] {
                inner += neg_log_ratio(&a, &b, i, k, tau);
                count += 1.0;
            }
        }
        total += inner / count;
    }
    total / a.len() as f64
}

/// Standard-normal entries, matching the scale of z-scored windows.
pub fn normal_matrix(r: &mut rng::Rng, rows: usize, cols: usize) -> Array2<f64> {
    use rand_distr::{Distribution, StandardNormal};
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(r))
}

pub fn random_matrix(r: &mut rng::Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| (r.random::<f64>() * 2.0 - 1.0) * scale)
}

/// The small configuration used for finite-difference checks. The channel
/// count is kept below `target_channels` so the config stays valid.
pub fn gradcheck_config() -> ModelConfig {
    ModelConfig {
        d_model: 8,
        layers_per_branch: 1,
        heads: 2,
        d_ff: 16,
        patch_len: 4,
        target_channels: 8,
        n_times: 32,
        n_channels: 6,
        dropout: 0.0,
        ..ModelConfig::default()
    }
}

pub struct GradCheck {
    /// Worst element-wise `rel_err`.
    pub max_rel_err: f64,
    pub worst: String,
    /// Worst per-tensor `|a - n|_2 / max(|a|_2, |n|_2, 1e-6)`.
    pub max_tensor_rel_err: f64,
    pub worst_tensor: String,
    pub n_checked: usize,
}

/// Element-wise relative error, with a floor on the denominator so that
/// entries whose true gradient is essentially zero are compared absolutely.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Compare analytic joint-loss gradients through encoder and projection head
/// against central differences for every trainable parameter element.
pub fn gradient_check(seed: u64, batch: usize, step: f64) -> GradCheck {
    let cfg = gradcheck_config();
    let mut model = Model::<f64>::new(cfg.clone(), seed).unwrap();
    let mut r = rng::stream(seed, "gradcheck", &[]);
    let xa: Vec<Array2<f64>> = (0..batch).map(|_| normal_matrix(&mut r, cfg.n_times, cfg.n_channels)).collect();
    let xb: Vec<Array2<f64>> = (0..batch).map(|_| normal_matrix(&mut r, cfg.n_times, cfg.n_channels)).collect();
    let ids: Vec<u32> = (0..batch).map(|i| (i / 2) as u32).collect();
    let va: Vec<_> = xa.iter().map(|x| x.view()).collect();
    let vb: Vec<_> = xb.iter().map(|x| x.view()).collect();

    let analytic = model.contrastive_step(&va, &vb, &ids, None).unwrap().grads;
    let mut out = GradCheck {
        max_rel_err: 0.0,
        worst: String::new(),
        max_tensor_rel_err: 0.0,
        worst_tensor: String::new(),
        n_checked: 0,
    };
    for (p, grad) in analytic.iter().enumerate() {
        let Some(grad) = grad else { continue };
        let name = model.params.names()[p].clone();
        let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
        for idx in 0..grad.len() {
            let (i, j) = (idx / grad.ncols(), idx % grad.ncols());
            let orig = model.params.tensors()[p][[i, j]];
            model.params.tensors_mut()[p][[i, j]] = orig + step;
            let plus = model.contrastive_loss(&va, &vb, &ids).unwrap();
            model.params.tensors_mut()[p][[i, j]] = orig - step;
            let minus = model.contrastive_loss(&va, &vb, &ids).unwrap();
            model.params.tensors_mut()[p][[i, j]] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let e = rel_err(grad[[i, j]], numeric);
            diff2 += (grad[[i, j]] - numeric).powi(2);
            a2 += grad[[i, j]].powi(2);
            n2 += numeric * numeric;
            out.n_checked += 1;
            if e > out.max_rel_err {
                out.max_rel_err = e;
                out.worst = format!("{name}[{i},{j}] analytic {} numeric {numeric}", grad[[i, j]]);
            }
        }
        let t = diff2.sqrt() / a2.sqrt().max(n2.sqrt()).max(1e-6);
        if t > out.max_tensor_rel_err {
            out.max_tensor_rel_err = t;
            out.worst_tensor = name;
        }
    }
    out
}

/// Tally oracle: strict majority, otherwise compare summed probabilities of
/// the two classes, otherwise positive.
pub fn oracle_label(preds: &[(usize, f64)]) -> usize {
    let pos = preds.iter().filter(|p| p.0 == 1).count();
    let neg = preds.len() - pos;
    if pos * 2 > preds.len() {
        return 1;
    }
    if neg * 2 > preds.len() {
        return 0;
    }
    let mean_pos: f64 = preds.iter().map(|p| p.1).sum::<f64>() / preds.len() as f64;
    let mean_neg: f64 = preds.iter().map(|p| 1.0 - p.1).sum::<f64>() / preds.len() as f64;
    if mean_neg > mean_pos {
        0
    } else {
        1
    }
}
