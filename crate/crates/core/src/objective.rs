//! Sample-level, subject-level and joint InfoNCE losses over two batches of
//! projected views.
//!
//! All three losses share one form: with `S_ij = cos(za_i, zb_j) / tau` and a
//! row-stochastic target matrix `W`,
//!
//! ```text
//! L = mean_i [ logsumexp_j S_ij - sum_k W_ik S_ik ]
//! ```
//!
//! Sample level uses `W = I`; subject level spreads each row uniformly over
//! the same-subject columns (the diagonal included); the joint loss mixes
//! the two with weights `lambda1` and `lambda2`.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{config, LeadError, Result};
use crate::Scalar;

/// Norms are clamped below at this value before dividing.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct ContrastBatch<'a, T> {
    pub za: ArrayView2<'a, T>,
    pub zb: ArrayView2<'a, T>,
    pub subject_ids: &'a [u32],
    pub tau: T,
    pub lambda1: T,
    pub lambda2: T,
}

impl<'a, T: Scalar> ContrastBatch<'a, T> {
    pub fn new(za: ArrayView2<'a, T>, zb: ArrayView2<'a, T>, subject_ids: &'a [u32], tau: T) -> Self {
        ContrastBatch {
            za,
            zb,
            subject_ids,
            tau,
            lambda1: T::of(0.5),
            lambda2: T::of(0.5),
        }
    }

    pub fn with_weights(mut self, lambda1: T, lambda2: T) -> Self {
        self.lambda1 = lambda1;
        self.lambda2 = lambda2;
        self
    }

    fn check(&self) -> Result<()> {
        if !(self.tau > T::zero()) {
            return Err(config(format!("temperature must be positive, got {}", self.tau)));
        }
        if self.za.dim() != self.zb.dim() {
            return Err(LeadError::Shape(format!(
                "view batches differ in shape: {:?} vs {:?}",
                self.za.dim(),
                self.zb.dim()
            )));
        }
        if self.za.nrows() == 0 {
            return Err(LeadError::Shape("contrastive batch is empty".into()));
        }
        if self.subject_ids.len() != self.za.nrows() {
            return Err(LeadError::Shape(format!(
                "{} subject IDs for a batch of {}",
                self.subject_ids.len(),
                self.za.nrows()
            )));
        }
        Ok(())
    }
}

pub fn cosine_sim<T: Scalar>(u: &[T], v: &[T]) -> T {
    let floor = T::of(NORM_FLOOR);
    let dot: T = u.iter().zip(v).map(|(a, b)| *a * *b).sum();
    let nu = u.iter().map(|a| *a * *a).sum::<T>().sqrt().max(floor);
    let nv = v.iter().map(|a| *a * *a).sum::<T>().sqrt().max(floor);
    dot / (nu * nv)
}

/// Rows scaled to unit norm, with the clamped norms returned for backprop.
fn normalize_rows<T: Scalar>(z: ArrayView2<T>) -> (Array2<T>, Array1<T>) {
    let floor = T::of(NORM_FLOOR);
    let norms = z.map_axis(Axis(1), |r| r.iter().map(|a| *a * *a).sum::<T>().sqrt());
    let clamped = norms.mapv(|n| n.max(floor));
    let mut out = z.to_owned();
    for (mut row, n) in out.rows_mut().into_iter().zip(&clamped) {
        row.mapv_inplace(|a| a / *n);
    }
    (out, norms)
}

/// Gradient through `u = z / max(|z|, floor)` given `du`.
fn normalize_rows_backward<T: Scalar>(u: &Array2<T>, norms: &Array1<T>, du: &Array2<T>) -> Array2<T> {
    let floor = T::of(NORM_FLOOR);
    let mut dz = du.clone();
    for ((mut dz_row, u_row), n) in dz.rows_mut().into_iter().zip(u.rows()).zip(norms) {
        if *n > floor {
            let proj: T = u_row.iter().zip(dz_row.iter()).map(|(a, b)| *a * *b).sum();
            for (d, a) in dz_row.iter_mut().zip(u_row.iter()) {
                *d = (*d - *a * proj) / *n;
            }
        } else {
            dz_row.mapv_inplace(|d| d / floor);
        }
    }
    dz
}

/// Subject-positive target rows: uniform over columns sharing row i's subject.
pub fn subject_targets<T: Scalar>(subject_ids: &[u32]) -> Array2<T> {
    let b = subject_ids.len();
    let mut w = Array2::zeros((b, b));
    for i in 0..b {
        let count = subject_ids.iter().filter(|s| **s == subject_ids[i]).count();
        let share = T::one() / T::of(count as f64);
        for k in 0..b {
            if subject_ids[k] == subject_ids[i] {
                w[[i, k]] = share;
            }
        }
    }
    w
}

pub fn joint_targets<T: Scalar>(subject_ids: &[u32], lambda1: T, lambda2: T) -> Array2<T> {
    let mut w = subject_targets::<T>(subject_ids) * lambda2;
    for i in 0..subject_ids.len() {
        w[[i, i]] += lambda1;
    }
    w
}

/// Loss value and, if requested, gradients with respect to `za` and `zb`.
pub fn targeted_infonce<T: Scalar>(
    za: ArrayView2<T>,
    zb: ArrayView2<T>,
    targets: &Array2<T>,
    tau: T,
    with_grad: bool,
) -> (T, Option<(Array2<T>, Array2<T>)>) {
    let b = za.nrows();
    let bt = T::of(b as f64);
    let (na, norm_a) = normalize_rows(za);
    let (nb, norm_b) = normalize_rows(zb);
    let s = na.dot(&nb.t()) / tau;
    let mut loss = T::zero();
    let mut p = Array2::zeros((b, b));
    for i in 0..b {
        let row = s.row(i);
        let m = row.fold(T::neg_infinity(), |acc, v| acc.max(*v));
        let mut sum = T::zero();
        for j in 0..b {
            let e = (row[j] - m).exp();
            p[[i, j]] = e;
            sum += e;
        }
        p.row_mut(i).mapv_inplace(|e| e / sum);
        let lse = m + sum.ln();
        let target: T = row.iter().zip(targets.row(i)).map(|(a, w)| *a * *w).sum();
        loss += lse - target;
    }
    loss /= bt;
    if !with_grad {
        return (loss, None);
    }
    let ds = (p - targets) / bt;
    let dna = ds.dot(&nb) / tau;
    let dnb = ds.t().dot(&na) / tau;
    let dza = normalize_rows_backward(&na, &norm_a, &dna);
    let dzb = normalize_rows_backward(&nb, &norm_b, &dnb);
    (loss, Some((dza, dzb)))
}

pub fn sample_loss<T: Scalar>(batch: &ContrastBatch<T>) -> Result<T> {
    batch.check()?;
    let eye = Array2::eye(batch.za.nrows());
    Ok(targeted_infonce(batch.za, batch.zb, &eye, batch.tau, false).0)
}

pub fn subject_loss<T: Scalar>(batch: &ContrastBatch<T>) -> Result<T> {
    batch.check()?;
    let w = subject_targets(batch.subject_ids);
    Ok(targeted_infonce(batch.za, batch.zb, &w, batch.tau, false).0)
}

fn check_weights<T: Scalar>(batch: &ContrastBatch<T>) -> Result<()> {
    let (l1, l2) = (batch.lambda1, batch.lambda2);
    if l1 < T::zero() || l2 < T::zero() || (l1 + l2 - T::one()).abs() > T::of(1e-6) {
        return Err(config(format!(
            "loss weights must be non-negative and sum to 1, got {l1} and {l2}"
        )));
    }
    Ok(())
}

pub fn joint_loss<T: Scalar>(batch: &ContrastBatch<T>) -> Result<T> {
    Ok(joint_loss_with_grad(batch)?.0)
}

/// Joint loss and its gradients with respect to `za` and `zb`.
pub fn joint_loss_with_grad<T: Scalar>(batch: &ContrastBatch<T>) -> Result<(T, Array2<T>, Array2<T>)> {
    batch.check()?;
    check_weights(batch)?;
    let w = joint_targets(batch.subject_ids, batch.lambda1, batch.lambda2);
    let (loss, grads) = targeted_infonce(batch.za, batch.zb, &w, batch.tau, true);
    let (ga, gb) = grads.expect("gradient requested");
    Ok((loss, ga, gb))
}
