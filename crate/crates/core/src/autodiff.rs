//! A small reverse-mode tape over 2-D arrays, with exactly the operations the
//! encoder needs. Attention and the losses are fused ops with hand-written
//! backward passes.

use ndarray::{s, Array2, ArrayView2, Axis, Zip};

use crate::objective::targeted_infonce;
use crate::Scalar;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    /// `a * b^T`
    MatMulT(Var, Var),
    Add(Var, Var),
    /// Broadcast a `1 x m` row over every row of `a`.
    AddRow(Var, Var),
    /// Add an `r x m` table to each consecutive block of `r` rows of `a`.
    AddTiled(Var, Var),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Array2<T>,
        rstd: Vec<T>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        seq: usize,
        heads: usize,
        probs: Vec<Array2<T>>,
    },
    /// `(B*R) x C` blocks transposed to `(B*C) x R`.
    BlockTranspose(Var),
    SelectRows(Var, Vec<usize>),
    ConcatCols(Var, Var),
    /// Elementwise product with a constant (dropout masks).
    Mask(Var, Array2<T>),
    Contrastive {
        z: Var,
        grad: Array2<T>,
    },
    CrossEntropy {
        logits: Var,
        grad: Array2<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Array2<T>,
    op: Op<T>,
    /// Whether any parameter feeds this node.
    requires: bool,
}

#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

pub fn gelu<T: Scalar>(x: T) -> T {
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let u = c * (x + T::of(0.044715) * x * x * x);
    T::of(0.5) * x * (T::one() + u.tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let k = T::of(0.044715);
    let th = (c * (x + k * x * x * x)).tanh();
    let half = T::of(0.5);
    half * (T::one() + th) + half * x * (T::one() - th * th) * c * (T::one() + T::of(3.0) * k * x * x)
}

fn softmax_rows<T: Scalar>(m: &mut Array2<T>) {
    for mut row in m.rows_mut() {
        let mx = row.fold(T::neg_infinity(), |a, v| a.max(*v));
        let mut sum = T::zero();
        row.mapv_inplace(|v| {
            let e = (v - mx).exp();
            sum += e;
            e
        });
        row.mapv_inplace(|v| v / sum);
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<T>, op: Op<T>) -> Var {
        let requires = match &op {
            Op::Leaf => false,
            Op::Param(_) => true,
            Op::MatMul(a, b) | Op::MatMulT(a, b) | Op::Add(a, b) | Op::AddRow(a, b) | Op::AddTiled(a, b) | Op::ConcatCols(a, b) => {
                self.req(*a) || self.req(*b)
            }
            Op::Gelu(a) | Op::BlockTranspose(a) | Op::SelectRows(a, _) | Op::Mask(a, _) => self.req(*a),
            Op::LayerNorm { x, gamma, beta, .. } => self.req(*x) || self.req(*gamma) || self.req(*beta),
            Op::Attention { q, k, v, .. } => self.req(*q) || self.req(*k) || self.req(*v),
            Op::Contrastive { z, .. } => self.req(*z),
            Op::CrossEntropy { logits, .. } => self.req(*logits),
        };
        self.nodes.push(Node { value, op, requires });
        Var(self.nodes.len() - 1)
    }

    fn req(&self, v: Var) -> bool {
        self.nodes[v.0].requires
    }

    pub fn value(&self, v: Var) -> &Array2<T> {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Array2<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, index: usize, value: Array2<T>) -> Var {
        self.push(value, Op::Param(index))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn add_tiled(&mut self, a: Var, table: Var) -> Var {
        let r = self.value(table).nrows();
        let mut v = self.value(a).clone();
        assert_eq!(v.nrows() % r, 0, "tiled add needs whole blocks");
        for mut block in v.axis_chunks_iter_mut(Axis(0), r) {
            block += self.value(table);
        }
        self.push(v, Op::AddTiled(a, table))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(gelu);
        self.push(v, Op::Gelu(a))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let d = T::of(xv.ncols() as f64);
        let eps = T::of(LAYER_NORM_EPS);
        let mut xhat = xv.clone();
        let mut rstd = Vec::with_capacity(xv.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / d;
            let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / d;
            let r = T::one() / (var + eps).sqrt();
            row.mapv_inplace(|v| (v - mean) * r);
            rstd.push(r);
        }
        let out = &xhat * self.value(gamma) + self.value(beta);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
        )
    }

    /// Multi-head scaled dot-product attention over consecutive blocks of
    /// `seq` rows. `q`, `k`, `v` are `(B*seq) x D`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, seq: usize, heads: usize) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (rows, d) = qv.dim();
        assert_eq!(d % heads, 0, "d_model must split evenly across heads");
        assert_eq!(rows % seq, 0, "attention input is not whole sequences");
        let dh = d / heads;
        let scale = T::one() / T::of(dh as f64).sqrt();
        let mut out = Array2::zeros((rows, d));
        let mut probs = Vec::with_capacity(rows / seq * heads);
        for b in 0..rows / seq {
            let r0 = b * seq;
            for h in 0..heads {
                let c0 = h * dh;
                let qh = qv.slice(s![r0..r0 + seq, c0..c0 + dh]);
                let kh = kv.slice(s![r0..r0 + seq, c0..c0 + dh]);
                let vh = vv.slice(s![r0..r0 + seq, c0..c0 + dh]);
                let mut p = qh.dot(&kh.t());
                p.mapv_inplace(|x| x * scale);
                softmax_rows(&mut p);
                out.slice_mut(s![r0..r0 + seq, c0..c0 + dh]).assign(&p.dot(&vh));
                probs.push(p);
            }
        }
        self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                seq,
                heads,
                probs,
            },
        )
    }

    pub fn block_transpose(&mut self, x: Var, rows: usize) -> Var {
        let v = block_transpose(self.value(x).view(), rows);
        self.push(v, Op::BlockTranspose(x))
    }

    pub fn select_rows(&mut self, x: Var, idx: Vec<usize>) -> Var {
        let v = self.value(x).select(Axis(0), &idx);
        self.push(v, Op::SelectRows(x, idx))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let v = ndarray::concatenate(Axis(1), &[self.value(a).view(), self.value(b).view()])
            .expect("row counts agree");
        self.push(v, Op::ConcatCols(a, b))
    }

    pub fn mask(&mut self, x: Var, mask: Array2<T>) -> Var {
        let v = self.value(x) * &mask;
        self.push(v, Op::Mask(x, mask))
    }

    /// Joint contrastive loss on `z`, whose first half holds view a and second
    /// half view b. `targets` is the row-stochastic positive weighting.
    pub fn contrastive(&mut self, z: Var, targets: &Array2<T>, tau: T) -> Var {
        let zv = self.value(z);
        let b = zv.nrows() / 2;
        assert_eq!(zv.nrows(), 2 * b, "contrastive input needs two equal halves");
        let (loss, grads) = targeted_infonce(
            zv.slice(s![..b, ..]),
            zv.slice(s![b.., ..]),
            targets,
            tau,
            true,
        );
        let (ga, gb) = grads.expect("gradient requested");
        let grad = ndarray::concatenate(Axis(0), &[ga.view(), gb.view()]).expect("same width");
        self.push(Array2::from_elem((1, 1), loss), Op::Contrastive { z, grad })
    }

    /// Mean softmax cross-entropy.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Var {
        let lv = self.value(logits);
        let n = T::of(lv.nrows() as f64);
        let mut p = lv.clone();
        softmax_rows(&mut p);
        let mut loss = T::zero();
        for (i, &y) in labels.iter().enumerate() {
            loss -= p[[i, y]].max(T::min_positive_value()).ln();
            p[[i, y]] -= T::one();
        }
        p.mapv_inplace(|g| g / n);
        self.push(
            Array2::from_elem((1, 1), loss / n),
            Op::CrossEntropy { logits, grad: p },
        )
    }

    /// Back-propagate from a scalar node. Returns gradients for every
    /// parameter index seen on the tape (`n_params` slots, `None` if unused).
    pub fn backward(&self, root: Var, n_params: usize) -> Vec<Option<Array2<T>>> {
        let mut grads: Vec<Option<Array2<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Array2::ones(self.value(root).raw_dim()));
        let mut out: Vec<Option<Array2<T>>> = (0..n_params).map(|_| None).collect();

        let req: Vec<bool> = self.nodes.iter().map(|n| n.requires).collect();
        let acc = |grads: &mut [Option<Array2<T>>], v: Var, g: Array2<T>| {
            if !req[v.0] {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        };

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires {
                continue;
            }
            match &node.op {
                Op::Leaf => {}
                Op::Param(p) => match &mut out[*p] {
                    Some(existing) => *existing += &g,
                    slot => *slot = Some(g),
                },
                Op::MatMul(a, b) => {
                    if req[a.0] {
                        acc(&mut grads, *a, g.dot(&self.value(*b).t()));
                    }
                    if req[b.0] {
                        acc(&mut grads, *b, self.value(*a).t().dot(&g));
                    }
                }
                Op::MatMulT(a, b) => {
                    if req[a.0] {
                        acc(&mut grads, *a, g.dot(self.value(*b)));
                    }
                    if req[b.0] {
                        acc(&mut grads, *b, g.t().dot(self.value(*a)));
                    }
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::AddRow(a, row) => {
                    acc(&mut grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *a, g);
                }
                Op::AddTiled(a, table) => {
                    let r = self.value(*table).nrows();
                    let mut gt = Array2::zeros(self.value(*table).raw_dim());
                    for block in g.axis_chunks_iter(Axis(0), r) {
                        gt += &block;
                    }
                    acc(&mut grads, *table, gt);
                    acc(&mut grads, *a, g);
                }
                Op::Gelu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|gv, &x| *gv *= gelu_grad(x));
                    acc(&mut grads, *a, ga);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    rstd,
                } => {
                    let gv = self.value(*gamma);
                    acc(&mut grads, *gamma, (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    let d = T::of(g.ncols() as f64);
                    let mut gx = &g * gv;
                    for ((mut row, xh), r) in gx.rows_mut().into_iter().zip(xhat.rows()).zip(rstd) {
                        let mean_g = row.sum() / d;
                        let mean_gx = row.iter().zip(xh.iter()).map(|(a, b)| *a * *b).sum::<T>() / d;
                        Zip::from(&mut row)
                            .and(&xh)
                            .for_each(|gi, &xi| *gi = *r * (*gi - mean_g - xi * mean_gx));
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    seq,
                    heads,
                    probs,
                } => {
                    let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                    let (rows, d) = qv.dim();
                    let dh = d / heads;
                    let scale = T::one() / T::of(dh as f64).sqrt();
                    let mut gq = Array2::zeros((rows, d));
                    let mut gk = Array2::zeros((rows, d));
                    let mut gvv = Array2::zeros((rows, d));
                    for b in 0..rows / seq {
                        let r0 = b * seq;
                        for h in 0..*heads {
                            let c0 = h * dh;
                            let p = &probs[b * heads + h];
                            let go = g.slice(s![r0..r0 + seq, c0..c0 + dh]);
                            let qh = qv.slice(s![r0..r0 + seq, c0..c0 + dh]);
                            let kh = kv.slice(s![r0..r0 + seq, c0..c0 + dh]);
                            let vh = vv.slice(s![r0..r0 + seq, c0..c0 + dh]);
                            gvv.slice_mut(s![r0..r0 + seq, c0..c0 + dh]).assign(&p.t().dot(&go));
                            let dp = go.dot(&vh.t());
                            // dS = P * (dP - rowsum(dP * P)), then the score scale.
                            let mut ds = &dp * p;
                            for (mut row, prow) in ds.rows_mut().into_iter().zip(p.rows()) {
                                let dot = row.sum();
                                Zip::from(&mut row)
                                    .and(&prow)
                                    .for_each(|x, &pv| *x = (*x - pv * dot) * scale);
                            }
                            gq.slice_mut(s![r0..r0 + seq, c0..c0 + dh]).assign(&ds.dot(&kh));
                            gk.slice_mut(s![r0..r0 + seq, c0..c0 + dh]).assign(&ds.t().dot(&qh));
                        }
                    }
                    acc(&mut grads, *q, gq);
                    acc(&mut grads, *k, gk);
                    acc(&mut grads, *v, gvv);
                }
                Op::BlockTranspose(x) => {
                    let cols = self.value(*x).ncols();
                    acc(&mut grads, *x, block_transpose(g.view(), cols));
                }
                Op::SelectRows(x, idx) => {
                    let mut gx = Array2::zeros(self.value(*x).raw_dim());
                    for (k, &i) in idx.iter().enumerate() {
                        let mut row = gx.row_mut(i);
                        row += &g.row(k);
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::ConcatCols(a, b) => {
                    let wa = self.value(*a).ncols();
                    acc(&mut grads, *a, g.slice(s![.., ..wa]).to_owned());
                    acc(&mut grads, *b, g.slice(s![.., wa..]).to_owned());
                }
                Op::Mask(x, m) => acc(&mut grads, *x, &g * m),
                Op::Contrastive { z, grad } => acc(&mut grads, *z, grad * g[[0, 0]]),
                Op::CrossEntropy { logits, grad } => acc(&mut grads, *logits, grad * g[[0, 0]]),
            }
        }
        out
    }
}

/// Treat `x` as `B` stacked `rows x C` blocks and transpose each block.
pub fn block_transpose<T: Scalar>(x: ArrayView2<T>, rows: usize) -> Array2<T> {
    let (total, cols) = x.dim();
    assert_eq!(total % rows, 0, "block transpose needs whole blocks");
    let blocks = total / rows;
    let mut out = Array2::zeros((blocks * cols, rows));
    for b in 0..blocks {
        out.slice_mut(s![b * cols..(b + 1) * cols, ..])
            .assign(&x.slice(s![b * rows..(b + 1) * rows, ..]).t());
    }
    out
}
