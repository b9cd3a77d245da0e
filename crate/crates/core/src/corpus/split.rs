//! Subject-independent, class-stratified train/val/test assignment.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::labels::LabelTable;
use crate::error::{config, data, LeadError, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = LeadError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(config(format!("unknown split '{other}' (train, val, test)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !(*p >= 0.0)) || ((parts.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(config(format!(
                "split ratios must be non-negative and sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub seed: u64,
    pub ratios: SplitRatios,
    pub by_subject: BTreeMap<u32, Split>,
}

impl SplitAssignment {
    pub fn split_of(&self, subject_id: u32) -> Option<Split> {
        self.by_subject.get(&subject_id).copied()
    }

    pub fn subjects_in(&self, split: Split) -> Vec<u32> {
        self.by_subject
            .iter()
            .filter(|(_, s)| **s == split)
            .map(|(id, _)| *id)
            .collect()
    }
}

/// Per-class counts `(train, val, test)` by rounding the first two shares.
fn class_counts(n: usize, ratios: &SplitRatios) -> (usize, usize, usize) {
    let train = ((n as f64) * ratios.train).round() as usize;
    let val = (((n as f64) * ratios.val).round() as usize).min(n - train.min(n));
    let train = train.min(n);
    (train, val, n - train - val)
}

/// Shuffle each class's subjects with a stream keyed by `(seed, dataset_id)`
/// and cut it by the ratios. Classes too small to populate every split are
/// still fully assigned, with a warning.
pub fn split_subjects(
    labels: &LabelTable,
    ratios: SplitRatios,
    seed: u64,
    dataset_id: &str,
) -> Result<SplitAssignment> {
    ratios.validate()?;
    if labels.is_empty() {
        return Err(data("cannot split an empty label table"));
    }
    let mut by_class: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for r in &labels.rows {
        by_class.entry(r.label).or_default().push(r.subject_id);
    }
    let mut rng = rng::stream(seed, "split", &[rng::hash_str(dataset_id)]);
    let mut by_subject = BTreeMap::new();
    for (class, ids) in by_class.iter_mut() {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let (n_train, n_val, n_test) = class_counts(ids.len(), &ratios);
        if ids.len() < 3 {
            log::warn!(
                "dataset {dataset_id}: class {class} has {} subjects, fewer than the three splits",
                ids.len()
            );
        }
        debug_assert_eq!(n_train + n_val + n_test, ids.len());
        for (k, id) in ids.iter().enumerate() {
            let split = if k < n_train {
                Split::Train
            } else if k < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            by_subject.insert(*id, split);
        }
    }
    Ok(SplitAssignment {
        seed,
        ratios,
        by_subject,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::labels::LabelRow;
    use proptest::prelude::*;

    fn balanced(n: u32) -> LabelTable {
        LabelTable::new(
            (1..=n)
                .map(|id| LabelRow {
                    label: (id - 1) % 2,
                    subject_id: id,
                })
                .collect(),
        )
    }

    #[test]
    fn ten_subjects_split_three_one_one_per_class() {
        let labels = balanced(10);
        let a = split_subjects(&labels, SplitRatios::default(), 41, "synth").unwrap();
        assert_eq!(a.subjects_in(Split::Train).len(), 6);
        assert_eq!(a.subjects_in(Split::Val).len(), 2);
        assert_eq!(a.subjects_in(Split::Test).len(), 2);
        for split in Split::ALL {
            for class in 0..2 {
                let n = a
                    .subjects_in(split)
                    .iter()
                    .filter(|id| labels.label_of(**id) == Some(class))
                    .count();
                assert_eq!(n, if split == Split::Train { 3 } else { 1 });
            }
        }
        let b = split_subjects(&labels, SplitRatios::default(), 41, "synth").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn seeds_change_assignment() {
        let labels = balanced(100);
        let a = split_subjects(&labels, SplitRatios::default(), 41, "synth").unwrap();
        let b = split_subjects(&labels, SplitRatios::default(), 42, "synth").unwrap();
        assert!(a.by_subject.iter().any(|(id, s)| b.split_of(*id) != Some(*s)));
    }

    #[test]
    fn tiny_class_still_assigned() {
        let labels = LabelTable::new(vec![
            LabelRow { label: 0, subject_id: 1 },
            LabelRow { label: 1, subject_id: 2 },
            LabelRow { label: 1, subject_id: 3 },
            LabelRow { label: 1, subject_id: 4 },
        ]);
        let a = split_subjects(&labels, SplitRatios::default(), 1, "x").unwrap();
        assert_eq!(a.by_subject.len(), 4);
    }

    #[test]
    fn bad_ratios_rejected() {
        let r = SplitRatios { train: 0.5, val: 0.2, test: 0.2 };
        assert!(split_subjects(&balanced(10), r, 1, "x").is_err());
    }

    proptest! {
        #[test]
        fn exclusive_complete_and_stratified(n in 4u32..200, classes in 1u32..4, seed in any::<u64>()) {
            let labels = LabelTable::new((1..=n).map(|id| LabelRow { label: id % classes, subject_id: id }).collect());
            let a = split_subjects(&labels, SplitRatios::default(), seed, "d").unwrap();
            prop_assert_eq!(a.by_subject.len(), n as usize);
            for class in 0..classes {
                let members: Vec<u32> = labels.rows.iter().filter(|r| r.label == class).map(|r| r.subject_id).collect();
                let total = members.len() as f64;
                for (split, ratio) in [(Split::Train, 0.6), (Split::Val, 0.2), (Split::Test, 0.2)] {
                    let got = members.iter().filter(|id| a.split_of(**id) == Some(split)).count() as f64;
                    prop_assert!((got - ratio * total).abs() <= 1.0 + 1e-9);
                }
            }
        }
    }
}
