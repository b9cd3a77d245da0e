//! LEADL: the subject label table.
//!
//! ```text
//! "LEADL" | version: u16 | n_rows: u32 | n_rows x (label: i32, subject_id: i32)
//! ```

use std::path::Path;

use crate::error::{data, LeadError, Result};

pub const MAGIC: &[u8; 5] = b"LEADL";
pub const VERSION: u16 = 1;
pub const FILE_NAME: &str = "labels.leadl";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelRow {
    pub label: u32,
    pub subject_id: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelTable {
    pub rows: Vec<LabelRow>,
}

impl LabelTable {
    pub fn new(rows: Vec<LabelRow>) -> Self {
        LabelTable { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn label_of(&self, subject_id: u32) -> Option<u32> {
        self.rows
            .iter()
            .find(|r| r.subject_id == subject_id)
            .map(|r| r.label)
    }

    pub fn subject_ids(&self) -> Vec<u32> {
        self.rows.iter().map(|r| r.subject_id).collect()
    }

    /// IDs must be exactly `1..=N` and labels below `n_classes`.
    pub fn validate(&self, n_classes: usize) -> Result<()> {
        let mut ids = self.subject_ids();
        ids.sort_unstable();
        for (k, id) in ids.iter().enumerate() {
            if *id as usize != k + 1 {
                return Err(data(format!(
                    "subject IDs must be unique and contiguous from 1; found {id} at rank {}",
                    k + 1
                )));
            }
        }
        if let Some(r) = self.rows.iter().find(|r| r.label as usize >= n_classes) {
            return Err(data(format!(
                "subject {} has label {} outside the {n_classes} declared classes",
                r.subject_id, r.label
            )));
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(11 + 8 * self.rows.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows.len() as u32).to_le_bytes());
        for r in &self.rows {
            let label = i32::try_from(r.label).map_err(|_| data("label exceeds i32"))?;
            let id = i32::try_from(r.subject_id).map_err(|_| data("subject ID exceeds i32"))?;
            out.extend_from_slice(&label.to_le_bytes());
            out.extend_from_slice(&id.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 5 || &bytes[..5] != MAGIC {
            return Err(LeadError::Format("missing LEADL magic".into()));
        }
        if bytes.len() < 11 {
            return Err(LeadError::Length {
                expected: 11,
                found: bytes.len() as u64,
            });
        }
        let version = u16::from_le_bytes([bytes[5], bytes[6]]);
        if version != VERSION {
            return Err(LeadError::Version {
                found: version,
                supported: VERSION,
            });
        }
        let n = u32::from_le_bytes(bytes[7..11].try_into().expect("4 bytes")) as u64;
        let expected = 11 + 8 * n;
        if bytes.len() as u64 != expected {
            return Err(LeadError::Length {
                expected,
                found: bytes.len() as u64,
            });
        }
        let mut rows = Vec::with_capacity(n as usize);
        for chunk in bytes[11..].chunks_exact(8) {
            let label = i32::from_le_bytes(chunk[..4].try_into().expect("4 bytes"));
            let id = i32::from_le_bytes(chunk[4..].try_into().expect("4 bytes"));
            if label < 0 || id <= 0 {
                return Err(data(format!("invalid label row ({label}, {id})")));
            }
            rows.push(LabelRow {
                label: label as u32,
                subject_id: id as u32,
            });
        }
        Ok(LabelTable { rows })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()?).map_err(|e| LeadError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| LeadError::io(path, e))?;
        Self::decode(&bytes).map_err(|e| e.in_file(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[(u32, u32)]) -> LabelTable {
        LabelTable::new(
            rows.iter()
                .map(|&(label, subject_id)| LabelRow { label, subject_id })
                .collect(),
        )
    }

    #[test]
    fn round_trip_and_validation() {
        let t = table(&[(1, 2), (0, 1), (1, 3)]);
        assert_eq!(LabelTable::decode(&t.encode().unwrap()).unwrap(), t);
        assert!(t.validate(2).is_ok());
        assert!(t.validate(1).is_err());
        assert!(table(&[(0, 1), (0, 3)]).validate(2).is_err());
        assert!(table(&[(0, 1), (0, 1)]).validate(2).is_err());
    }

    #[test]
    fn decode_errors() {
        let mut bytes = table(&[(0, 1)]).encode().unwrap();
        assert!(matches!(LabelTable::decode(&bytes[..15]), Err(LeadError::Length { .. })));
        bytes[5] = 2;
        assert!(matches!(LabelTable::decode(&bytes), Err(LeadError::Version { .. })));
        bytes[1] = b'X';
        assert!(matches!(LabelTable::decode(&bytes), Err(LeadError::Format(_))));
    }
}
