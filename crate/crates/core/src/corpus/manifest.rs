use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{config, data, LeadError, Result};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const FORMAT_VERSION: u32 = 1;
pub const SAMPLING_RATE: f64 = 128.0;
pub const N_CHANNELS: usize = 19;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassName {
    pub label: u32,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectEntry {
    pub id: u32,
    pub file: String,
}

/// Corpus description stored as `manifest.toml` next to the tensor files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub format_version: u32,
    pub dataset_id: String,
    pub sampling_rate: f64,
    pub n_channels: usize,
    pub n_times: usize,
    pub labels_file: String,
    pub classes: Vec<ClassName>,
    pub subjects: Vec<SubjectEntry>,
    #[serde(default)]
    pub provenance: Vec<String>,
}

impl CorpusManifest {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_name(&self, label: u32) -> Option<&str> {
        self.classes
            .iter()
            .find(|c| c.label == label)
            .map(|c| c.name.as_str())
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(config(format!(
                "manifest format_version {} is not supported (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.dataset_id.trim().is_empty() {
            return Err(config("manifest dataset_id is empty"));
        }
        if self.sampling_rate != SAMPLING_RATE {
            return Err(data(format!(
                "corpus sampling_rate must be {SAMPLING_RATE} Hz after preprocessing, got {}",
                self.sampling_rate
            )));
        }
        if self.n_channels != N_CHANNELS {
            return Err(data(format!(
                "corpus must have {N_CHANNELS} aligned channels, got {}",
                self.n_channels
            )));
        }
        if self.n_times == 0 {
            return Err(data("corpus window length is zero"));
        }
        let mut labels: Vec<u32> = self.classes.iter().map(|c| c.label).collect();
        labels.sort_unstable();
        if labels.is_empty() || labels.iter().enumerate().any(|(k, l)| *l as usize != k) {
            return Err(config("class labels must be 0..n_classes with no gaps"));
        }
        for (k, s) in self.subjects.iter().enumerate() {
            if self.subjects[..k].iter().any(|o| o.id == s.id) {
                return Err(data(format!("subject {} listed twice in manifest", s.id)));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config(format!("cannot serialize manifest: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: CorpusManifest =
            toml::from_str(text).map_err(|e| LeadError::Format(format!("manifest: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LeadError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| e.in_file(path))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(|e| LeadError::io(path, e))
    }
}
