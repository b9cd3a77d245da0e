//! Pre-training, fine-tuning and evaluation drivers.

use std::collections::{BTreeMap, BTreeSet};

use log::{debug, info};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::config::{Phase, TrainConfig};
use super::metrics::{vote_subjects, Confusion, SamplePrediction, SubjectVote};
use crate::augment::{apply, draw_kind, make_views};
use crate::batching::{make_batches, shuffle_indices};
use crate::corpus::{Corpus, Split, SplitAssignment};
use crate::error::{config, data, LeadError, Result};
use crate::model::{argmax, Model, ModelConfig};
use crate::optim::{clip_grad_norm, cosine_lr, AdamW, SwaAccumulator};
use crate::rng::{self, epoch_seed, Rng};
use crate::Scalar;

/// Windows per forward pass at evaluation time.
const EVAL_CHUNK: usize = 128;

pub(crate) fn to_scalar<T: Scalar>(x: &Array2<f32>) -> Array2<T> {
    x.mapv(|v| T::of(v as f64))
}

fn check_corpus<T: Scalar>(model: &Model<T>, corpus: &Corpus) -> Result<()> {
    let cfg = &model.cfg;
    if corpus.n_times() != cfg.n_times || corpus.n_channels() != cfg.n_channels {
        return Err(LeadError::Shape(format!(
            "corpus {} has {}x{} windows, model expects {}x{}",
            corpus.dataset_id(),
            corpus.n_times(),
            corpus.n_channels(),
            cfg.n_times,
            cfg.n_channels
        )));
    }
    Ok(())
}

fn check_labels<T: Scalar>(model: &Model<T>, corpus: &Corpus) -> Result<()> {
    if corpus.n_classes() != model.cfg.n_classes {
        return Err(data(format!(
            "corpus {} has {} classes, model has {}",
            corpus.dataset_id(),
            corpus.n_classes(),
            model.cfg.n_classes
        )));
    }
    for s in &corpus.samples {
        match corpus.labels.label_of(s.subject_id) {
            Some(l) if (l as usize) < model.cfg.n_classes => {}
            _ => {
                return Err(data(format!(
                    "corpus {}: subject {} has no usable label",
                    corpus.dataset_id(),
                    s.subject_id
                )))
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome<T: Scalar> {
    pub model: Model<T>,
    /// Mean joint loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub swa_snapshots: usize,
}

/// Fresh model seeded from `cfg.seed`, then [`pretrain_model`].
pub fn pretrain<T: Scalar>(corpora: &[&Corpus], model_cfg: &ModelConfig, cfg: &TrainConfig) -> Result<PretrainOutcome<T>> {
    let model = Model::new(model_cfg.clone(), cfg.seed)?;
    pretrain_model(model, corpora, cfg)
}

/// Joint contrastive training on every window of every corpus.
pub fn pretrain_model<T: Scalar>(mut model: Model<T>, corpora: &[&Corpus], cfg: &TrainConfig) -> Result<PretrainOutcome<T>> {
    cfg.validate()?;
    let mut windows: Vec<&Array2<f32>> = Vec::new();
    let mut subjects: Vec<u32> = Vec::new();
    let mut global: BTreeMap<(usize, u32), u32> = BTreeMap::new();
    for (c, corpus) in corpora.iter().enumerate() {
        check_corpus(&model, corpus)?;
        for s in &corpus.samples {
            let next = global.len() as u32;
            let id = *global.entry((c, s.subject_id)).or_insert(next);
            windows.push(&s.data);
            subjects.push(id);
        }
    }
    if windows.is_empty() {
        return Err(data("pre-training needs at least one window"));
    }
    info!(
        "pretrain: {} windows from {} subjects in {} corpora",
        windows.len(),
        global.len(),
        corpora.len()
    );

    let mut opt = AdamW::new(&model.params, cfg.weight_decay);
    let mut swa = SwaAccumulator::new();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(cfg.lr, epoch, cfg.epochs);
        let plan = shuffle_indices(&subjects, cfg.batch_size, cfg.group_size, epoch_seed(cfg.seed, epoch))?;
        let mut batches = make_batches(&plan, true);
        if batches.is_empty() {
            // Fewer windows than one batch: train on the short batch.
            batches = make_batches(&plan, false);
        }
        let mut total = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let parts = [epoch as u64, b as u64];
            let mut aug_rng = rng::stream(cfg.seed, "pretrain-augment", &parts);
            let mut drop_rng = rng::stream(cfg.seed, "pretrain-dropout", &parts);
            let mut va = Vec::with_capacity(batch.len());
            let mut vb = Vec::with_capacity(batch.len());
            for &k in batch {
                let (a, v) = make_views(&to_scalar::<T>(windows[k]), &cfg.augmentation, &mut aug_rng)?;
                va.push(a);
                vb.push(v);
            }
            let ids: Vec<u32> = batch.iter().map(|&k| subjects[k]).collect();
            let views_a: Vec<ArrayView2<T>> = va.iter().map(|x| x.view()).collect();
            let views_b: Vec<ArrayView2<T>> = vb.iter().map(|x| x.view()).collect();
            let mut step = model.contrastive_step(&views_a, &views_b, &ids, Some(&mut drop_rng))?;
            let norm = clip_grad_norm(&mut step.grads, cfg.grad_clip_norm);
            opt.step(&mut model.params, &step.grads, lr);
            total += step.loss.to_f64_lossy();
            debug!("pretrain epoch {epoch} batch {b}: loss {:.5} grad norm {norm:.4}", step.loss);
        }
        let mean = total / batches.len() as f64;
        info!("pretrain epoch {epoch}: lr {lr:.3e} loss {mean:.5}");
        epoch_losses.push(mean);
        if cfg.swa_enabled && epoch >= cfg.swa_first_epoch() {
            swa.add(&model.params);
        }
    }
    if swa.count() > 0 {
        model.params = swa.average()?;
    }
    Ok(PretrainOutcome {
        model,
        epoch_losses,
        swa_snapshots: swa.count(),
    })
}

/// One corpus with its subject split, as fine-tuning input.
#[derive(Debug, Clone, Copy)]
pub struct SplitCorpus<'a> {
    pub corpus: &'a Corpus,
    pub split: &'a SplitAssignment,
}

/// Every subject sits in exactly one split and every sample's subject is
/// assigned.
pub fn check_subject_independent(corpus: &Corpus, split: &SplitAssignment) -> Result<()> {
    let mut seen: BTreeMap<u32, Split> = BTreeMap::new();
    for which in Split::ALL {
        for k in corpus.indices_in(split, which)? {
            let id = corpus.samples[k].subject_id;
            if let Some(prev) = seen.insert(id, which) {
                if prev != which {
                    return Err(config(format!(
                        "corpus {}: subject {id} appears in both {prev} and {which}",
                        corpus.dataset_id()
                    )));
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// Validation sample macro-F1 per dataset.
    pub val_f1: BTreeMap<String, f64>,
    pub mean_val_f1: f64,
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome<T: Scalar> {
    pub model: Model<T>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_f1: f64,
    /// Whether the weight average beat the best single epoch on validation.
    pub used_swa: bool,
    pub stopped_early: bool,
}

/// Mean validation macro-F1 over datasets that have validation subjects.
fn validation_f1<T: Scalar>(model: &Model<T>, sets: &[SplitCorpus], val: &[Vec<usize>]) -> Result<(BTreeMap<String, f64>, f64)> {
    let mut per = BTreeMap::new();
    for (d, idx) in sets.iter().zip(val) {
        if idx.is_empty() {
            continue;
        }
        let preds = predict(model, d.corpus, idx)?;
        let c = Confusion::from_pairs(
            model.cfg.n_classes,
            idx.iter().zip(&preds).map(|(&k, p)| (d.corpus.samples[k].label as usize, p.predicted)),
        );
        per.insert(d.corpus.dataset_id().to_string(), c.macro_f1());
    }
    let mean = per.values().sum::<f64>() / per.len() as f64;
    Ok((per, mean))
}

/// Cross-entropy training on the union of training splits with early
/// stopping on the mean validation macro-F1. `start` defaults to a fresh
/// model seeded from `cfg.seed`.
pub fn finetune<T: Scalar>(
    start: Option<Model<T>>,
    sets: &[SplitCorpus],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<FinetuneOutcome<T>> {
    cfg.validate()?;
    if cfg.phase == Phase::Pretrain {
        return Err(config("finetune needs a finetune or supervised training config"));
    }
    let mut model = match start {
        Some(m) => {
            if m.cfg != *model_cfg {
                return Err(LeadError::Shape("starting model config differs from the requested config".into()));
            }
            m
        }
        None => Model::new(model_cfg.clone(), cfg.seed)?,
    };
    if sets.is_empty() {
        return Err(config("fine-tuning needs at least one corpus"));
    }
    let mut train: Vec<(usize, usize)> = Vec::new();
    let mut val: Vec<Vec<usize>> = Vec::new();
    for (d, sc) in sets.iter().enumerate() {
        check_corpus(&model, sc.corpus)?;
        check_labels(&model, sc.corpus)?;
        check_subject_independent(sc.corpus, sc.split)?;
        train.extend(sc.corpus.indices_in(sc.split, Split::Train)?.into_iter().map(|k| (d, k)));
        val.push(sc.corpus.indices_in(sc.split, Split::Val)?);
    }
    if train.is_empty() {
        return Err(data("no training windows"));
    }
    if val.iter().all(|v| v.is_empty()) {
        return Err(config("no validation subjects in any corpus"));
    }
    let ids: Vec<u32> = (0..train.len() as u32).collect();

    let mut opt = AdamW::new(&model.params, cfg.weight_decay);
    let mut swa = SwaAccumulator::new();
    let mut history = Vec::new();
    let mut best = (f64::NEG_INFINITY, 0usize, model.params.clone());
    let mut since_best = 0usize;
    let mut stopped_early = false;
    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(cfg.lr, epoch, cfg.epochs);
        let plan = shuffle_indices(&ids, cfg.batch_size, 1, epoch_seed(cfg.seed, epoch))?;
        let batches = make_batches(&plan, false);
        let mut total = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let parts = [epoch as u64, b as u64];
            let mut aug_rng = rng::stream(cfg.seed, "finetune-augment", &parts);
            let mut drop_rng = rng::stream(cfg.seed, "finetune-dropout", &parts);
            let mut xs = Vec::with_capacity(batch.len());
            let mut labels = Vec::with_capacity(batch.len());
            for &k in batch {
                let (d, i) = train[k];
                let s = &sets[d].corpus.samples[i];
                let x = to_scalar::<T>(&s.data);
                xs.push(if cfg.augment { augment_once(&x, cfg, &mut aug_rng)? } else { x });
                labels.push(s.label as usize);
            }
            let views: Vec<ArrayView2<T>> = xs.iter().map(|x| x.view()).collect();
            let mut step = model.supervised_step(&views, &labels, Some(&mut drop_rng))?;
            clip_grad_norm(&mut step.grads, cfg.grad_clip_norm);
            opt.step(&mut model.params, &step.grads, lr);
            total += step.loss.to_f64_lossy() * batch.len() as f64;
        }
        let train_loss = total / train.len() as f64;
        let (val_f1, mean_val_f1) = validation_f1(&model, sets, &val)?;
        let record = EpochRecord {
            epoch,
            lr,
            train_loss,
            val_f1,
            mean_val_f1,
        };
        info!(
            "{}",
            serde_json::to_string(&record).map_err(|e| LeadError::Numeric(e.to_string()))?
        );
        history.push(record);
        if cfg.swa_enabled && epoch >= cfg.swa_first_epoch() {
            swa.add(&model.params);
        }
        if mean_val_f1 > best.0 {
            best = (mean_val_f1, epoch, model.params.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience.max(1) {
                stopped_early = epoch + 1 < cfg.epochs;
                info!("finetune: stopping after epoch {epoch}, best epoch {}", best.1);
                break;
            }
        }
    }
    let (best_val_f1, best_epoch, best_params) = best;
    model.params = best_params;
    let mut used_swa = false;
    let mut best_val_f1 = best_val_f1;
    if swa.count() > 0 {
        let mut averaged = model.clone();
        averaged.params = swa.average()?;
        let (_, swa_f1) = validation_f1(&averaged, sets, &val)?;
        info!("finetune: weight average of {} snapshots, val F1 {swa_f1:.4}", swa.count());
        if swa_f1 >= best_val_f1 {
            model = averaged;
            used_swa = true;
            best_val_f1 = swa_f1;
        }
    }
    Ok(FinetuneOutcome {
        model,
        history,
        best_epoch,
        best_val_f1,
        used_swa,
        stopped_early,
    })
}

fn augment_once<T: Scalar>(x: &Array2<T>, cfg: &TrainConfig, rng: &mut Rng) -> Result<Array2<T>> {
    let kind = draw_kind(&cfg.augmentation, rng)?;
    apply(x, kind, &cfg.augmentation, rng)
}

fn softmax(row: ndarray::ArrayView1<f64>) -> Vec<f64> {
    let m = row.fold(f64::NEG_INFINITY, |a, v| a.max(*v));
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Eval-mode predictions for the given windows.
pub fn predict_windows<T: Scalar>(model: &Model<T>, windows: &[Array2<T>], subjects: &[u32]) -> Result<Vec<SamplePrediction>> {
    let mut out = Vec::with_capacity(windows.len());
    for (chunk, ids) in windows.chunks(EVAL_CHUNK).zip(subjects.chunks(EVAL_CHUNK)) {
        let views: Vec<ArrayView2<T>> = chunk.iter().map(|x| x.view()).collect();
        let logits = model.logits(&views)?.mapv(|v| v.to_f64_lossy());
        for (row, &subject_id) in logits.rows().into_iter().zip(ids) {
            out.push(SamplePrediction {
                subject_id,
                predicted: argmax(row),
                probs: softmax(row),
            });
        }
    }
    Ok(out)
}

pub fn predict<T: Scalar>(model: &Model<T>, corpus: &Corpus, indices: &[usize]) -> Result<Vec<SamplePrediction>> {
    predict_transformed(model, corpus, indices, &|x| Ok(x.clone()))
}

pub(crate) type Transform<'a> = dyn Fn(&Array2<f32>) -> Result<Array2<f32>> + 'a;

fn predict_transformed<T: Scalar>(
    model: &Model<T>,
    corpus: &Corpus,
    indices: &[usize],
    transform: &Transform,
) -> Result<Vec<SamplePrediction>> {
    check_corpus(model, corpus)?;
    let mut out = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(EVAL_CHUNK) {
        let mut windows = Vec::with_capacity(chunk.len());
        for &k in chunk {
            windows.push(to_scalar::<T>(&transform(&corpus.samples[k].data)?));
        }
        let ids: Vec<u32> = chunk.iter().map(|&k| corpus.samples[k].subject_id).collect();
        out.extend(predict_windows(model, &windows, &ids)?);
    }
    Ok(out)
}

/// Metrics of one corpus (or one split of it).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub dataset_id: String,
    /// Split name, or "all".
    pub split: String,
    /// Ablation condition, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    pub n_samples: usize,
    pub sample_accuracy: f64,
    pub sample_macro_f1: f64,
    pub subject_accuracy: f64,
    pub subject_macro_f1: f64,
    pub subjects: Vec<SubjectVote>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub datasets: Vec<DatasetReport>,
}

impl MetricsReport {
    pub fn validate(&self) -> Result<()> {
        for d in &self.datasets {
            for (name, v) in [
                ("sample_accuracy", d.sample_accuracy),
                ("sample_macro_f1", d.sample_macro_f1),
                ("subject_accuracy", d.subject_accuracy),
                ("subject_macro_f1", d.subject_macro_f1),
            ] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(LeadError::Numeric(format!("{}: {name} = {v} outside [0, 1]", d.dataset_id)));
                }
            }
            let tallied: usize = d.subjects.iter().map(|s| s.tally.iter().sum::<usize>()).sum();
            if tallied != d.n_samples {
                return Err(data(format!(
                    "{}: vote tallies cover {tallied} of {} samples",
                    d.dataset_id, d.n_samples
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| LeadError::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| LeadError::Format(e.to_string()))
    }
}

pub(crate) fn evaluate_with<T: Scalar>(
    model: &Model<T>,
    corpus: &Corpus,
    indices: &[usize],
    split: &str,
    transform: &Transform,
) -> Result<DatasetReport> {
    check_labels(model, corpus)?;
    let preds = predict_transformed(model, corpus, indices, transform)?;
    let n_classes = model.cfg.n_classes;
    let sample = Confusion::from_pairs(
        n_classes,
        indices.iter().zip(&preds).map(|(&k, p)| (corpus.samples[k].label as usize, p.predicted)),
    );
    let subjects = vote_subjects(&preds, &corpus.labels, n_classes)?;
    Ok(DatasetReport {
        dataset_id: corpus.dataset_id().to_string(),
        split: split.to_string(),
        condition: None,
        n_samples: indices.len(),
        sample_accuracy: sample.accuracy(),
        sample_macro_f1: sample.macro_f1(),
        subject_accuracy: subjects.accuracy,
        subject_macro_f1: subjects.macro_f1,
        subjects: subjects.votes,
    })
}

/// Sample metrics by argmax over logits, subject metrics by majority vote.
pub fn evaluate<T: Scalar>(model: &Model<T>, corpus: &Corpus, indices: &[usize], split: &str) -> Result<DatasetReport> {
    evaluate_with(model, corpus, indices, split, &|x| Ok(x.clone()))
}

/// Evaluate one split, or the whole corpus when `split` is `None`.
pub fn evaluate_split<T: Scalar>(
    model: &Model<T>,
    corpus: &Corpus,
    assignment: Option<&SplitAssignment>,
    split: Option<Split>,
) -> Result<DatasetReport> {
    let (indices, name) = select(corpus, assignment, split)?;
    evaluate(model, corpus, &indices, &name)
}

pub(crate) fn select(corpus: &Corpus, assignment: Option<&SplitAssignment>, split: Option<Split>) -> Result<(Vec<usize>, String)> {
    match (assignment, split) {
        (Some(a), Some(s)) => Ok((corpus.indices_in(a, s)?, s.name().to_string())),
        (None, Some(s)) => Err(config(format!("split {s} requested without a split assignment"))),
        (_, None) => Ok(((0..corpus.samples.len()).collect(), "all".to_string())),
    }
}

/// Encoder outputs (`h`) for the given windows, eval mode.
pub fn embed<T: Scalar>(model: &Model<T>, corpus: &Corpus, indices: &[usize]) -> Result<Array2<f64>> {
    check_corpus(model, corpus)?;
    let mut out = Array2::zeros((indices.len(), model.cfg.repr_dim()));
    for (c, chunk) in indices.chunks(EVAL_CHUNK).enumerate() {
        let windows: Vec<Array2<T>> = chunk.iter().map(|&k| to_scalar(&corpus.samples[k].data)).collect();
        let views: Vec<ArrayView2<T>> = windows.iter().map(|x| x.view()).collect();
        let h = model.encode(&views, None)?;
        let start = c * EVAL_CHUNK;
        out.slice_mut(ndarray::s![start..start + chunk.len(), ..])
            .assign(&h.mapv(|v| v.to_f64_lossy()));
    }
    Ok(out)
}

/// Subjects of a corpus that fall in `split`.
pub fn subjects_in(corpus: &Corpus, assignment: &SplitAssignment, split: Split) -> Result<BTreeSet<u32>> {
    Ok(corpus
        .indices_in(assignment, split)?
        .into_iter()
        .map(|k| corpus.samples[k].subject_id)
        .collect())
}
