//! LEADT: one subject's windows as a little-endian `[n_samples, t, c]` f32 array.
//!
//! ```text
//! "LEADT" | version: u16 | n_samples: u32 | t: u32 | c: u32 | f32 payload
//! ```

use std::path::Path;

use ndarray::Array2;

use super::EpochSample;
use crate::error::{data, LeadError, Result};

pub const MAGIC: &[u8; 5] = b"LEADT";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 5 + 2 + 4 * 3;

/// Decoded tensor file contents.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectTensor {
    pub t: usize,
    pub c: usize,
    pub windows: Vec<Array2<f32>>,
}

impl SubjectTensor {
    pub fn into_samples(self, subject_id: u32, label: u32) -> Vec<EpochSample> {
        self.windows
            .into_iter()
            .map(|data| EpochSample {
                data,
                subject_id,
                label,
            })
            .collect()
    }
}

pub fn file_name(subject_id: u32) -> String {
    format!("feature_{subject_id}.leadt")
}

/// Subject ID encoded in a `feature_<ID>.leadt` file name.
pub fn subject_from_file_name(name: &str) -> Option<u32> {
    name.strip_prefix("feature_")?
        .strip_suffix(".leadt")?
        .parse()
        .ok()
}

pub fn encode(t: usize, c: usize, windows: &[&Array2<f32>]) -> Result<Vec<u8>> {
    for w in windows {
        if w.dim() != (t, c) {
            return Err(LeadError::DimensionMismatch(format!(
                "window is {:?}, file declares ({t}, {c})",
                w.dim()
            )));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(data("window contains non-finite values"));
        }
    }
    let dim = |v: usize| {
        u32::try_from(v).map_err(|_| data(format!("dimension {v} does not fit in 32 bits")))
    };
    let mut out = Vec::with_capacity(HEADER_LEN + windows.len() * t * c * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&dim(windows.len())?.to_le_bytes());
    out.extend_from_slice(&dim(t)?.to_le_bytes());
    out.extend_from_slice(&dim(c)?.to_le_bytes());
    for w in windows {
        // Row-major iteration: time-major, then channel.
        for v in w.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn u32_at(bytes: &[u8], at: usize) -> usize {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize
}

pub fn decode(bytes: &[u8]) -> Result<SubjectTensor> {
    if bytes.len() < 5 || &bytes[..5] != MAGIC {
        return Err(LeadError::Format("missing LEADT magic".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(LeadError::Length {
            expected: HEADER_LEN as u64,
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
    let n = u32_at(bytes, 7);
    let t = u32_at(bytes, 11);
    let c = u32_at(bytes, 15);
    let expected = (n as u64) * (t as u64) * (c as u64) * 4;
    let found = (bytes.len() - HEADER_LEN) as u64;
    if expected != found {
        return Err(LeadError::Length { expected, found });
    }
    let payload = &bytes[HEADER_LEN..];
    let per = t * c;
    let mut windows = Vec::with_capacity(n);
    for k in 0..n {
        let chunk = &payload[k * per * 4..(k + 1) * per * 4];
        let vals: Vec<f32> = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(data(format!("window {k} contains non-finite values")));
        }
        windows.push(Array2::from_shape_vec((t, c), vals).expect("length checked"));
    }
    Ok(SubjectTensor { t, c, windows })
}

/// Write one subject's windows. All samples must share `(t, c)` and subject.
pub fn write_subject_tensor(path: &Path, t: usize, c: usize, samples: &[EpochSample]) -> Result<()> {
    if let Some(first) = samples.first() {
        if samples.iter().any(|s| s.subject_id != first.subject_id) {
            return Err(data("samples in one tensor file must share a subject ID"));
        }
    }
    let windows: Vec<&Array2<f32>> = samples.iter().map(|s| &s.data).collect();
    let bytes = encode(t, c, &windows).map_err(|e| e.in_file(path))?;
    std::fs::write(path, bytes).map_err(|e| LeadError::io(path, e))
}

pub fn read_subject_tensor(path: &Path) -> Result<SubjectTensor> {
    let bytes = std::fs::read(path).map_err(|e| LeadError::io(path, e))?;
    decode(&bytes).map_err(|e| e.in_file(path))
}
