//! Dual-branch transformer encoder with projection head and classifier.
//!
//! The temporal branch embeds cross-channel patches of `patch_len`
//! timestamps; the spatial branch mixes channels up to `target_channels`
//! per timestamp and embeds each resulting channel's whole time course as a
//! token. Each branch runs its own stack of pre-norm encoder layers, and the
//! last token of both is concatenated into `h` (length `2 * d_model`).

pub mod checkpoint;
pub mod params;

use ndarray::{s, Array2, ArrayView2};
use rand::distr::{Distribution, Uniform};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use checkpoint::Checkpoint;
pub use params::ParameterSet;

use crate::autodiff::{Tape, Var};
use crate::error::{config, LeadError, Result};
use crate::objective;
use crate::rng::{self, Rng};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub layers_per_branch: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub patch_len: usize,
    pub target_channels: usize,
    pub n_classes: usize,
    pub n_times: usize,
    pub n_channels: usize,
    pub tau: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 128,
            layers_per_branch: 6,
            heads: 8,
            d_ff: 256,
            patch_len: 8,
            target_channels: 128,
            n_classes: 2,
            n_times: 128,
            n_channels: 19,
            tau: 0.1,
            lambda1: 0.5,
            lambda2: 0.5,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_model", self.d_model),
            ("layers_per_branch", self.layers_per_branch),
            ("heads", self.heads),
            ("d_ff", self.d_ff),
            ("patch_len", self.patch_len),
            ("target_channels", self.target_channels),
            ("n_classes", self.n_classes),
            ("n_times", self.n_times),
            ("n_channels", self.n_channels),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(config(format!("model {name} must be positive")));
            }
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(config(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.target_channels < self.n_channels {
            return Err(config(format!(
                "target_channels {} must be at least n_channels {}",
                self.target_channels, self.n_channels
            )));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(config(format!("tau must be positive, got {}", self.tau)));
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 || (self.lambda1 + self.lambda2 - 1.0).abs() > 1e-9 {
            return Err(config(format!(
                "lambda1 + lambda2 must equal 1, got {} + {}",
                self.lambda1, self.lambda2
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }

    /// Temporal token count after zero-padding to a whole number of patches.
    pub fn n_patches(&self) -> usize {
        self.n_times.div_ceil(self.patch_len)
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn repr_dim(&self) -> usize {
        2 * self.d_model
    }
}

/// Fixed sinusoidal table: row = position, column = feature.
pub fn sinusoidal_table<T: Scalar>(positions: usize, dim: usize) -> Array2<T> {
    Array2::from_shape_fn((positions, dim), |(pos, j)| {
        let i = (j / 2) as f64;
        let angle = pos as f64 / 10000f64.powf(2.0 * i / dim as f64);
        T::of(if j % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

/// Zero-pad `x` (`T x C`) at the tail to `n_patches * patch_len` rows and
/// flatten each run of `patch_len` rows into one `patch_len * C` row.
pub fn patchify<T: Scalar>(x: ArrayView2<T>, patch_len: usize) -> Array2<T> {
    let (t, c) = x.dim();
    let n = t.div_ceil(patch_len);
    let mut padded = Array2::zeros((n * patch_len, c));
    padded.slice_mut(s![..t, ..]).assign(&x);
    padded
        .into_shape_with_order((n, patch_len * c))
        .expect("contiguous padded buffer")
}

#[derive(Debug, Clone)]
struct LayerIdx {
    ln1_g: usize,
    ln1_b: usize,
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    ln2_g: usize,
    ln2_b: usize,
    ff_w1: usize,
    ff_b1: usize,
    ff_w2: usize,
    ff_b2: usize,
}

#[derive(Debug, Clone)]
struct BranchIdx {
    layers: Vec<LayerIdx>,
    final_g: usize,
    final_b: usize,
}

/// Parameter indices by role, fixed by the config.
#[derive(Debug, Clone)]
struct Layout {
    patch_w: usize,
    patch_b: usize,
    pos_temporal: usize,
    pos_channel: usize,
    conv_w: usize,
    conv_b: usize,
    spatial_w: usize,
    spatial_b: usize,
    temporal: BranchIdx,
    spatial: BranchIdx,
    head_w1: usize,
    head_b1: usize,
    head_w2: usize,
    head_b2: usize,
    cls_w: usize,
    cls_b: usize,
}

/// Parameters that never receive gradients.
pub const FIXED_TABLES: [&str; 2] = ["temporal.pos_table", "spatial.channel_pos_table"];

enum Init {
    /// Uniform in `±1/sqrt(fan_in)`.
    FanIn(usize),
    Zeros,
    Ones,
    Table(Array2<f64>),
}

fn build<T: Scalar>(cfg: &ModelConfig, seed: Option<u64>) -> (ParameterSet<T>, Layout) {
    let mut ps = ParameterSet::new();
    let (d, ff) = (cfg.d_model, cfg.d_ff);
    let add = |ps: &mut ParameterSet<T>, name: String, shape: (usize, usize), init: Init| -> usize {
        let tensor = match (seed, init) {
            (_, Init::Zeros) | (None, _) => Array2::zeros(shape),
            (_, Init::Ones) => Array2::ones(shape),
            (_, Init::Table(t)) => t.mapv(T::of),
            (Some(seed), Init::FanIn(fan_in)) => {
                let bound = 1.0 / (fan_in as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                let mut r = rng::stream(seed, "init", &[rng::hash_str(&name)]);
                Array2::from_shape_fn(shape, |_| T::of(dist.sample(&mut r)))
            }
        };
        ps.push(name, tensor)
    };

    let branch = |ps: &mut ParameterSet<T>, tag: &str| -> BranchIdx {
        let mut layers = Vec::new();
        for l in 0..cfg.layers_per_branch {
            let p = format!("{tag}.layer{l}");
            let lin = |ps: &mut ParameterSet<T>, name: &str, fan_in: usize, out: usize| {
                (
                    add(ps, format!("{p}.{name}.weight"), (fan_in, out), Init::FanIn(fan_in)),
                    add(ps, format!("{p}.{name}.bias"), (1, out), Init::Zeros),
                )
            };
            let ln1_g = add(ps, format!("{p}.ln1.gamma"), (1, d), Init::Ones);
            let ln1_b = add(ps, format!("{p}.ln1.beta"), (1, d), Init::Zeros);
            let (wq, bq) = lin(ps, "attn.q", d, d);
            let (wk, bk) = lin(ps, "attn.k", d, d);
            let (wv, bv) = lin(ps, "attn.v", d, d);
            let (wo, bo) = lin(ps, "attn.out", d, d);
            let ln2_g = add(ps, format!("{p}.ln2.gamma"), (1, d), Init::Ones);
            let ln2_b = add(ps, format!("{p}.ln2.beta"), (1, d), Init::Zeros);
            let (ff_w1, ff_b1) = lin(ps, "ff1", d, ff);
            let (ff_w2, ff_b2) = lin(ps, "ff2", ff, d);
            layers.push(LayerIdx {
                ln1_g,
                ln1_b,
                wq,
                bq,
                wk,
                bk,
                wv,
                bv,
                wo,
                bo,
                ln2_g,
                ln2_b,
                ff_w1,
                ff_b1,
                ff_w2,
                ff_b2,
            });
        }
        BranchIdx {
            layers,
            final_g: add(ps, format!("{tag}.final_ln.gamma"), (1, d), Init::Ones),
            final_b: add(ps, format!("{tag}.final_ln.beta"), (1, d), Init::Zeros),
        }
    };

    let (lc, t, c, f) = (cfg.patch_len * cfg.n_channels, cfg.n_times, cfg.n_channels, cfg.target_channels);
    let patch_w = add(&mut ps, "temporal.patch.weight".into(), (lc, d), Init::FanIn(lc));
    let patch_b = add(&mut ps, "temporal.patch.bias".into(), (1, d), Init::Zeros);
    let pos_temporal = add(
        &mut ps,
        FIXED_TABLES[0].into(),
        (cfg.n_patches(), d),
        Init::Table(sinusoidal_table(cfg.n_patches(), d)),
    );
    let temporal = branch(&mut ps, "temporal");
    let pos_channel = add(
        &mut ps,
        FIXED_TABLES[1].into(),
        (c, t),
        Init::Table(sinusoidal_table(c, t)),
    );
    let conv_w = add(&mut ps, "spatial.conv.weight".into(), (f, c), Init::FanIn(c));
    let conv_b = add(&mut ps, "spatial.conv.bias".into(), (1, f), Init::Zeros);
    let spatial_w = add(&mut ps, "spatial.linear.weight".into(), (t, d), Init::FanIn(t));
    let spatial_b = add(&mut ps, "spatial.linear.bias".into(), (1, d), Init::Zeros);
    let spatial = branch(&mut ps, "spatial");
    let head_w1 = add(&mut ps, "head.fc1.weight".into(), (2 * d, d), Init::FanIn(2 * d));
    let head_b1 = add(&mut ps, "head.fc1.bias".into(), (1, d), Init::Zeros);
    let head_w2 = add(&mut ps, "head.fc2.weight".into(), (d, d), Init::FanIn(d));
    let head_b2 = add(&mut ps, "head.fc2.bias".into(), (1, d), Init::Zeros);
    let cls_w = add(&mut ps, "classifier.weight".into(), (2 * d, cfg.n_classes), Init::FanIn(2 * d));
    let cls_b = add(&mut ps, "classifier.bias".into(), (1, cfg.n_classes), Init::Zeros);
    let layout = Layout {
        patch_w,
        patch_b,
        pos_temporal,
        pos_channel,
        conv_w,
        conv_b,
        spatial_w,
        spatial_b,
        temporal,
        spatial,
        head_w1,
        head_b1,
        head_w2,
        head_b2,
        cls_w,
        cls_b,
    };
    (ps, layout)
}

/// Deterministic initial parameters for `cfg`.
pub fn init_params<T: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<ParameterSet<T>> {
    cfg.validate()?;
    Ok(build(cfg, Some(seed)).0)
}

/// Loss value plus one gradient slot per parameter (`None` for fixed tables
/// and parameters the loss does not reach).
pub struct LossGrad<T> {
    pub loss: T,
    pub grads: Vec<Option<Array2<T>>>,
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    pub cfg: ModelConfig,
    pub params: ParameterSet<T>,
    layout: Layout,
}

/// Forward-pass state: the tape plus the variable each parameter was pushed as.
struct Graph<'m, T: Scalar> {
    model: &'m Model<T>,
    tape: Tape<T>,
    vars: Vec<Option<Var>>,
    dropout: Option<&'m mut Rng>,
}

impl<'m, T: Scalar> Graph<'m, T> {
    fn new(model: &'m Model<T>, dropout: Option<&'m mut Rng>) -> Self {
        Graph {
            model,
            tape: Tape::new(),
            vars: vec![None; model.params.len()],
            dropout,
        }
    }

    fn p(&mut self, idx: usize) -> Var {
        if let Some(v) = self.vars[idx] {
            return v;
        }
        let v = self.tape.param(idx, self.model.params.tensors()[idx].clone());
        self.vars[idx] = Some(v);
        v
    }

    fn linear(&mut self, x: Var, w: usize, b: usize) -> Var {
        let w = self.p(w);
        let b = self.p(b);
        let y = self.tape.matmul(x, w);
        self.tape.add_row(y, b)
    }

    fn drop(&mut self, x: Var) -> Var {
        let rate = self.model.cfg.dropout;
        let Some(rng) = self.dropout.as_deref_mut() else {
            return x;
        };
        if rate == 0.0 {
            return x;
        }
        let keep = T::of(1.0 / (1.0 - rate));
        let dim = self.tape.value(x).raw_dim();
        let mask = Array2::from_shape_fn(dim, |_| if rng.random_bool(rate) { T::zero() } else { keep });
        self.tape.mask(x, mask)
    }

    fn layer_norm(&mut self, x: Var, g: usize, b: usize) -> Var {
        let g = self.p(g);
        let b = self.p(b);
        self.tape.layer_norm(x, g, b)
    }

    fn encoder(&mut self, mut x: Var, branch: &BranchIdx, seq: usize) -> Var {
        let heads = self.model.cfg.heads;
        for l in &branch.layers {
            let a = self.layer_norm(x, l.ln1_g, l.ln1_b);
            let q = self.linear(a, l.wq, l.bq);
            let k = self.linear(a, l.wk, l.bk);
            let v = self.linear(a, l.wv, l.bv);
            let att = self.tape.attention(q, k, v, seq, heads);
            let o = self.linear(att, l.wo, l.bo);
            let o = self.drop(o);
            x = self.tape.add(x, o);
            let a = self.layer_norm(x, l.ln2_g, l.ln2_b);
            let f = self.linear(a, l.ff_w1, l.ff_b1);
            let f = self.tape.gelu(f);
            let f = self.linear(f, l.ff_w2, l.ff_b2);
            let f = self.drop(f);
            x = self.tape.add(x, f);
        }
        self.layer_norm(x, branch.final_g, branch.final_b)
    }

    fn encode(&mut self, xs: &[ArrayView2<T>]) -> Var {
        let cfg = &self.model.cfg;
        let lay = self.model.layout.clone();
        let (b, n, f, t, c) = (xs.len(), cfg.n_patches(), cfg.target_channels, cfg.n_times, cfg.n_channels);

        let mut patches = Array2::zeros((b * n, cfg.patch_len * c));
        for (i, x) in xs.iter().enumerate() {
            patches
                .slice_mut(s![i * n..(i + 1) * n, ..])
                .assign(&patchify(*x, cfg.patch_len));
        }
        let patches = self.tape.leaf(patches);
        let tokens = self.linear(patches, lay.patch_w, lay.patch_b);
        let pos = self.tape.leaf(self.model.params.tensors()[lay.pos_temporal].clone());
        let tokens = self.tape.add_tiled(tokens, pos);
        let tokens = self.drop(tokens);
        let temporal = self.encoder(tokens, &lay.temporal, n);
        let last_t = self.tape.select_rows(temporal, (0..b).map(|i| i * n + n - 1).collect());

        let chan_pos = self.model.params.tensors()[lay.pos_channel].t().to_owned();
        let mut stacked = Array2::zeros((b * t, c));
        for (i, x) in xs.iter().enumerate() {
            stacked.slice_mut(s![i * t..(i + 1) * t, ..]).assign(&(x + &chan_pos));
        }
        let stacked = self.tape.leaf(stacked);
        let conv_w = self.p(lay.conv_w);
        let conv_b = self.p(lay.conv_b);
        let mixed = self.tape.matmul_t(stacked, conv_w);
        let mixed = self.tape.add_row(mixed, conv_b);
        let by_channel = self.tape.block_transpose(mixed, t);
        let tokens = self.linear(by_channel, lay.spatial_w, lay.spatial_b);
        let tokens = self.drop(tokens);
        let spatial = self.encoder(tokens, &lay.spatial, f);
        let last_s = self.tape.select_rows(spatial, (0..b).map(|i| i * f + f - 1).collect());

        self.tape.concat_cols(last_t, last_s)
    }

    fn project(&mut self, h: Var) -> Var {
        let lay = self.model.layout.clone();
        let z = self.linear(h, lay.head_w1, lay.head_b1);
        let z = self.tape.gelu(z);
        self.linear(z, lay.head_w2, lay.head_b2)
    }

    fn classify(&mut self, h: Var) -> Var {
        let lay = self.model.layout.clone();
        self.linear(h, lay.cls_w, lay.cls_b)
    }

    fn finite(&self, v: Var, what: &str) -> Result<()> {
        if self.tape.value(v).iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(LeadError::Numeric(format!("non-finite values in {what}")))
        }
    }
}

impl<T: Scalar> Model<T> {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let (params, layout) = build(&cfg, Some(seed));
        Ok(Model { cfg, params, layout })
    }

    /// Wrap existing parameters, checking names and shapes against `cfg`.
    pub fn from_params(cfg: ModelConfig, params: ParameterSet<T>) -> Result<Self> {
        cfg.validate()?;
        let (template, layout) = build::<T>(&cfg, None);
        template.check_compatible(&params)?;
        if !params.is_finite() {
            return Err(LeadError::Data("parameters contain non-finite values".into()));
        }
        Ok(Model { cfg, params, layout })
    }

    pub fn n_parameters(&self) -> usize {
        self.params.n_elements()
    }

    /// Trainable scalars, excluding the fixed positional tables.
    pub fn n_trainable(&self) -> usize {
        self.params
            .iter()
            .filter(|(n, _)| !FIXED_TABLES.contains(n))
            .map(|(_, t)| t.len())
            .sum()
    }

    fn check_inputs<X>(&self, xs: &[ArrayView2<X>]) -> Result<()> {
        if xs.is_empty() {
            return Err(LeadError::Shape("empty input batch".into()));
        }
        let want = (self.cfg.n_times, self.cfg.n_channels);
        for x in xs {
            if x.dim() != want {
                return Err(LeadError::Shape(format!(
                    "input window is {:?}, model expects {want:?}",
                    x.dim()
                )));
            }
        }
        Ok(())
    }

    fn check_h(&self, h: &Array2<T>) -> Result<()> {
        if h.ncols() != self.cfg.repr_dim() {
            return Err(LeadError::Shape(format!(
                "representation has {} columns, expected {}",
                h.ncols(),
                self.cfg.repr_dim()
            )));
        }
        Ok(())
    }

    /// `B x 2D` representations. Dropout is active only when `train` carries
    /// a generator.
    pub fn encode(&self, xs: &[ArrayView2<T>], train: Option<&mut Rng>) -> Result<Array2<T>> {
        self.check_inputs(xs)?;
        let mut g = Graph::new(self, train);
        let h = g.encode(xs);
        g.finite(h, "encoder output")?;
        Ok(g.tape.value(h).clone())
    }

    pub fn project(&self, h: &Array2<T>) -> Result<Array2<T>> {
        self.check_h(h)?;
        let mut g = Graph::new(self, None);
        let hv = g.tape.leaf(h.clone());
        let z = g.project(hv);
        Ok(g.tape.value(z).clone())
    }

    pub fn classify(&self, h: &Array2<T>) -> Result<Array2<T>> {
        self.check_h(h)?;
        let mut g = Graph::new(self, None);
        let hv = g.tape.leaf(h.clone());
        let y = g.classify(hv);
        Ok(g.tape.value(y).clone())
    }

    /// Class logits straight from windows.
    pub fn logits(&self, xs: &[ArrayView2<T>]) -> Result<Array2<T>> {
        let h = self.encode(xs, None)?;
        self.classify(&h)
    }

    /// Joint contrastive loss and gradients for two views of a batch.
    pub fn contrastive_step(
        &self,
        views_a: &[ArrayView2<T>],
        views_b: &[ArrayView2<T>],
        subject_ids: &[u32],
        dropout: Option<&mut Rng>,
    ) -> Result<LossGrad<T>> {
        self.check_inputs(views_a)?;
        self.check_inputs(views_b)?;
        if views_a.len() != views_b.len() || subject_ids.len() != views_a.len() {
            return Err(LeadError::Shape("views and subject IDs differ in length".into()));
        }
        let all: Vec<ArrayView2<T>> = views_a.iter().chain(views_b).cloned().collect();
        let targets = objective::joint_targets(subject_ids, T::of(self.cfg.lambda1), T::of(self.cfg.lambda2));
        let mut g = Graph::new(self, dropout);
        let h = g.encode(&all);
        let z = g.project(h);
        g.finite(z, "projection")?;
        let loss = g.tape.contrastive(z, &targets, T::of(self.cfg.tau));
        let value = g.tape.value(loss)[[0, 0]];
        if !value.is_finite() {
            return Err(LeadError::Numeric(format!("contrastive loss is {value}")));
        }
        let grads = g.tape.backward(loss, self.params.len());
        Ok(LossGrad { loss: value, grads })
    }

    /// Joint contrastive loss in eval mode, without building gradients.
    pub fn contrastive_loss(&self, views_a: &[ArrayView2<T>], views_b: &[ArrayView2<T>], subject_ids: &[u32]) -> Result<T> {
        if views_a.len() != views_b.len() {
            return Err(LeadError::Shape("views differ in length".into()));
        }
        let za = self.project(&self.encode(views_a, None)?)?;
        let zb = self.project(&self.encode(views_b, None)?)?;
        let batch = objective::ContrastBatch::new(za.view(), zb.view(), subject_ids, T::of(self.cfg.tau))
            .with_weights(T::of(self.cfg.lambda1), T::of(self.cfg.lambda2));
        objective::joint_loss(&batch)
    }

    /// Mean cross-entropy and gradients for a labelled batch.
    pub fn supervised_step(
        &self,
        xs: &[ArrayView2<T>],
        labels: &[usize],
        dropout: Option<&mut Rng>,
    ) -> Result<LossGrad<T>> {
        self.check_inputs(xs)?;
        if labels.len() != xs.len() {
            return Err(LeadError::Shape("labels and inputs differ in length".into()));
        }
        if let Some(bad) = labels.iter().find(|l| **l >= self.cfg.n_classes) {
            return Err(LeadError::Data(format!("label {bad} outside {} classes", self.cfg.n_classes)));
        }
        let mut g = Graph::new(self, dropout);
        let h = g.encode(xs);
        let logits = g.classify(h);
        g.finite(logits, "logits")?;
        let loss = g.tape.cross_entropy(logits, labels);
        let value = g.tape.value(loss)[[0, 0]];
        if !value.is_finite() {
            return Err(LeadError::Numeric(format!("cross-entropy is {value}")));
        }
        let grads = g.tape.backward(loss, self.params.len());
        Ok(LossGrad { loss: value, grads })
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            cfg: self.cfg.clone(),
            params: self.params.cast(),
            layout: self.layout.clone(),
        }
    }
}

/// Index of the largest logit; ties go to the lowest class index.
pub fn argmax<T: Scalar>(row: ndarray::ArrayView1<T>) -> usize {
    let mut best = 0;
    for (k, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = k;
        }
    }
    best
}
