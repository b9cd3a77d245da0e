//! Confusion counts, accuracy, macro-F1 and subject-level majority voting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::LabelTable;
use crate::error::{data, Result};

/// Label treated as the positive (disease) class in tie-breaks.
pub const POSITIVE_CLASS: usize = 1;

/// `counts[truth][pred]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: Vec<Vec<usize>>,
}

impl Confusion {
    pub fn new(n_classes: usize) -> Self {
        Confusion {
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    pub fn from_pairs(n_classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut c = Confusion::new(n_classes);
        for (t, p) in pairs {
            c.add(t, p);
        }
        c
    }

    pub fn add(&mut self, truth: usize, pred: usize) {
        self.counts[truth][pred] += 1;
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let hits: usize = (0..self.n_classes()).map(|k| self.counts[k][k]).sum();
        hits as f64 / total as f64
    }

    /// Per-class F1 `2TP / (2TP + FP + FN)`; `None` for a class that occurs
    /// neither in the truth nor in the predictions.
    pub fn class_f1(&self, k: usize) -> Option<f64> {
        let tp = self.counts[k][k];
        let fn_: usize = self.counts[k].iter().sum::<usize>() - tp;
        let fp: usize = self.counts.iter().map(|row| row[k]).sum::<usize>() - tp;
        let denom = 2 * tp + fp + fn_;
        (denom > 0).then(|| 2.0 * tp as f64 / denom as f64)
    }

    /// Unweighted mean of per-class F1 over classes present in truth or
    /// predictions.
    pub fn macro_f1(&self) -> f64 {
        let scores: Vec<f64> = (0..self.n_classes()).filter_map(|k| self.class_f1(k)).collect();
        if scores.is_empty() {
            return 0.0;
        }
        scores.iter().sum::<f64>() / scores.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePrediction {
    pub subject_id: u32,
    pub predicted: usize,
    /// Softmax over classes.
    pub probs: Vec<f64>,
}

impl SamplePrediction {
    pub fn positive_prob(&self) -> f64 {
        self.probs.get(POSITIVE_CLASS).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectVote {
    pub subject_id: u32,
    pub truth: usize,
    /// Predicted-sample counts per class.
    pub tally: Vec<usize>,
    pub mean_positive_prob: f64,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectMetrics {
    pub votes: Vec<SubjectVote>,
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// Modal class of a tally. Ties go to the tied class with the higher mean
/// predicted probability, then to the positive class, then to the lowest
/// label.
pub fn vote(tally: &[usize], mean_probs: &[f64]) -> usize {
    let top = tally.iter().copied().max().unwrap_or(0);
    let tied: Vec<usize> = (0..tally.len()).filter(|k| tally[*k] == top).collect();
    if tied.len() == 1 {
        return tied[0];
    }
    let best = tied.iter().map(|k| mean_probs[*k]).fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = tied.into_iter().filter(|k| mean_probs[*k] == best).collect();
    if tied.contains(&POSITIVE_CLASS) {
        POSITIVE_CLASS
    } else {
        tied[0]
    }
}

/// Majority vote per subject, in ascending subject order.
pub fn vote_subjects(preds: &[SamplePrediction], truth: &LabelTable, n_classes: usize) -> Result<SubjectMetrics> {
    struct Acc {
        tally: Vec<usize>,
        prob_sum: Vec<f64>,
    }
    let mut by_subject: BTreeMap<u32, Acc> = BTreeMap::new();
    for p in preds {
        if truth.label_of(p.subject_id).is_none() {
            return Err(data(format!("prediction for unknown subject {}", p.subject_id)));
        }
        if p.predicted >= n_classes || p.probs.len() != n_classes {
            return Err(data(format!(
                "prediction for subject {} does not match {n_classes} classes",
                p.subject_id
            )));
        }
        let acc = by_subject.entry(p.subject_id).or_insert_with(|| Acc {
            tally: vec![0; n_classes],
            prob_sum: vec![0.0; n_classes],
        });
        acc.tally[p.predicted] += 1;
        for (s, q) in acc.prob_sum.iter_mut().zip(&p.probs) {
            *s += q;
        }
    }
    let mut votes = Vec::with_capacity(by_subject.len());
    let mut confusion = Confusion::new(n_classes);
    for (subject_id, acc) in by_subject {
        let n: usize = acc.tally.iter().sum();
        let mean: Vec<f64> = acc.prob_sum.iter().map(|s| s / n as f64).collect();
        let predicted = vote(&acc.tally, &mean);
        let t = truth.label_of(subject_id).expect("checked above") as usize;
        if t >= n_classes {
            return Err(data(format!("subject {subject_id} has label {t} outside {n_classes} classes")));
        }
        confusion.add(t, predicted);
        votes.push(SubjectVote {
            subject_id,
            truth: t,
            mean_positive_prob: mean.get(POSITIVE_CLASS).copied().unwrap_or(0.0),
            tally: acc.tally,
            predicted,
        });
    }
    Ok(SubjectMetrics {
        votes,
        accuracy: confusion.accuracy(),
        macro_f1: confusion.macro_f1(),
    })
}
