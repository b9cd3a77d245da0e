//! On-disk corpus layout, subject splits, and the synthetic generator.
//!
//! A corpus directory holds `manifest.toml`, `labels.leadl` and one
//! `feature_<ID>.leadt` per subject.

pub mod labels;
pub mod manifest;
pub mod raw;
pub mod split;
pub mod synth;
pub mod tensor_file;

use std::path::Path;

use ndarray::Array2;

pub use labels::{LabelRow, LabelTable};
pub use manifest::{ClassName, CorpusManifest, SubjectEntry};
pub use raw::RawRecording;
pub use split::{split_subjects, Split, SplitAssignment, SplitRatios};
pub use synth::{synth_generate, synth_generate_with, synth_raw, synth_trial, SynthSpec};
pub use tensor_file::{read_subject_tensor, write_subject_tensor, SubjectTensor};

use crate::error::{config, data, LeadError, Result};

/// One preprocessed window with its subject and class.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSample {
    /// `T x C`, time-major.
    pub data: Array2<f32>,
    pub subject_id: u32,
    pub label: u32,
}

/// A fully loaded corpus. Samples are grouped by subject in ascending ID order.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub manifest: CorpusManifest,
    pub labels: LabelTable,
    pub samples: Vec<EpochSample>,
}

/// Windows for one subject before assembly into a corpus.
#[derive(Debug, Clone)]
pub struct SubjectWindows {
    pub subject_id: u32,
    pub label: u32,
    pub windows: Vec<Array2<f32>>,
}

impl Corpus {
    /// Assemble a corpus from per-subject windows, checking every invariant the
    /// on-disk form must satisfy.
    pub fn from_subjects(
        dataset_id: &str,
        class_names: &[String],
        n_times: usize,
        mut subjects: Vec<SubjectWindows>,
        provenance: Vec<String>,
    ) -> Result<Self> {
        subjects.sort_by_key(|s| s.subject_id);
        let classes = class_names
            .iter()
            .enumerate()
            .map(|(k, name)| ClassName {
                label: k as u32,
                name: name.clone(),
            })
            .collect();
        let manifest = CorpusManifest {
            format_version: manifest::FORMAT_VERSION,
            dataset_id: dataset_id.to_string(),
            sampling_rate: manifest::SAMPLING_RATE,
            n_channels: manifest::N_CHANNELS,
            n_times,
            labels_file: labels::FILE_NAME.to_string(),
            classes,
            subjects: subjects
                .iter()
                .map(|s| SubjectEntry {
                    id: s.subject_id,
                    file: tensor_file::file_name(s.subject_id),
                })
                .collect(),
            provenance,
        };
        let labels = LabelTable::new(
            subjects
                .iter()
                .map(|s| LabelRow {
                    label: s.label,
                    subject_id: s.subject_id,
                })
                .collect(),
        );
        let mut samples = Vec::new();
        for s in subjects {
            for w in s.windows {
                samples.push(EpochSample {
                    data: w,
                    subject_id: s.subject_id,
                    label: s.label,
                });
            }
        }
        let corpus = Corpus {
            manifest,
            labels,
            samples,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn validate(&self) -> Result<()> {
        self.manifest.validate()?;
        self.labels.validate(self.manifest.n_classes())?;
        if self.manifest.subjects.len() != self.labels.len() {
            return Err(data(format!(
                "manifest lists {} subjects but the label table has {}",
                self.manifest.subjects.len(),
                self.labels.len()
            )));
        }
        for row in &self.labels.rows {
            if !self.manifest.subjects.iter().any(|s| s.id == row.subject_id) {
                return Err(data(format!(
                    "subject {} has no tensor file in the manifest",
                    row.subject_id
                )));
            }
        }
        let (t, c) = (self.manifest.n_times, self.manifest.n_channels);
        for s in &self.samples {
            if s.data.dim() != (t, c) {
                return Err(LeadError::DimensionMismatch(format!(
                    "subject {} window is {:?}, corpus declares ({t}, {c})",
                    s.subject_id,
                    s.data.dim()
                )));
            }
            if self.labels.label_of(s.subject_id) != Some(s.label) {
                return Err(data(format!(
                    "sample label for subject {} disagrees with the label table",
                    s.subject_id
                )));
            }
        }
        Ok(())
    }

    pub fn dataset_id(&self) -> &str {
        &self.manifest.dataset_id
    }

    pub fn n_classes(&self) -> usize {
        self.manifest.n_classes()
    }

    pub fn n_subjects(&self) -> usize {
        self.labels.len()
    }

    pub fn n_times(&self) -> usize {
        self.manifest.n_times
    }

    pub fn n_channels(&self) -> usize {
        self.manifest.n_channels
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        std::fs::create_dir_all(dir).map_err(|e| LeadError::io(dir, e))?;
        let (t, c) = (self.n_times(), self.n_channels());
        for entry in &self.manifest.subjects {
            let mine: Vec<EpochSample> = self
                .samples
                .iter()
                .filter(|s| s.subject_id == entry.id)
                .cloned()
                .collect();
            write_subject_tensor(&dir.join(&entry.file), t, c, &mine)?;
        }
        self.labels.write(&dir.join(&self.manifest.labels_file))?;
        self.manifest.write(&dir.join(manifest::MANIFEST_FILE))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = CorpusManifest::read(&dir.join(manifest::MANIFEST_FILE))?;
        let labels = LabelTable::read(&dir.join(&manifest.labels_file))?;
        let mut entries = manifest.subjects.clone();
        entries.sort_by_key(|e| e.id);
        let mut samples = Vec::new();
        for entry in &entries {
            let path = dir.join(&entry.file);
            let tensor = read_subject_tensor(&path)?;
            if (tensor.t, tensor.c) != (manifest.n_times, manifest.n_channels) {
                return Err(LeadError::DimensionMismatch(format!(
                    "header ({}, {}) disagrees with manifest ({}, {})",
                    tensor.t, tensor.c, manifest.n_times, manifest.n_channels
                ))
                .in_file(&path));
            }
            let label = labels.label_of(entry.id).ok_or_else(|| {
                data(format!("subject {} has no row in the label table", entry.id))
            })?;
            samples.extend(tensor.into_samples(entry.id, label));
        }
        let corpus = Corpus {
            manifest,
            labels,
            samples,
        };
        corpus.validate().map_err(|e| e.in_file(dir))?;
        Ok(corpus)
    }

    pub fn split(&self, ratios: SplitRatios, seed: u64) -> Result<SplitAssignment> {
        split_subjects(&self.labels, ratios, seed, self.dataset_id())
    }

    /// Indices of samples whose subject falls in `which`.
    pub fn indices_in(&self, assignment: &SplitAssignment, which: Split) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for (k, s) in self.samples.iter().enumerate() {
            match assignment.split_of(s.subject_id) {
                Some(sp) if sp == which => out.push(k),
                Some(_) => {}
                None => {
                    return Err(config(format!(
                        "subject {} is missing from the split assignment",
                        s.subject_id
                    )))
                }
            }
        }
        Ok(out)
    }

    /// Sample indices per subject, ascending subject ID.
    pub fn subject_indices(&self) -> Vec<(u32, Vec<usize>)> {
        let mut out: Vec<(u32, Vec<usize>)> = Vec::new();
        for (k, s) in self.samples.iter().enumerate() {
            match out.iter_mut().find(|(id, _)| *id == s.subject_id) {
                Some((_, v)) => v.push(k),
                None => out.push((s.subject_id, vec![k])),
            }
        }
        out.sort_by_key(|(id, _)| *id);
        out
    }
}
