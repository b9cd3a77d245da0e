//! LEADR: one raw, unaligned recording as fed to `preprocess`.
//!
//! ```text
//! "LEADR" | version: u16 | fs: f64 | subject_id: i32 | label: i32
//!   | n_channels: u32 | n_times: u32
//!   | n_channels x (name_len: u16, UTF-8 name)
//!   | n_times x n_channels f32 samples (time-major)
//! ```
//! Electrode coordinates are not stored; they come from the montage table.

use std::path::Path;

use ndarray::Array2;

use crate::error::{data, LeadError, Result};
use crate::signal::{Montage, RawTrial};

pub const MAGIC: &[u8; 5] = b"LEADR";
pub const VERSION: u16 = 1;
pub const EXTENSION: &str = "leadr";

#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    pub subject_id: u32,
    pub label: u32,
    pub fs: f64,
    pub channel_names: Vec<String>,
    /// Time-major samples.
    pub data: Array2<f32>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.bytes.len() {
            return Err(LeadError::Length {
                expected: (self.at + n) as u64,
                found: self.bytes.len() as u64,
            });
        }
        let out = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

impl RawRecording {
    pub fn encode(&self) -> Result<Vec<u8>> {
        if self.channel_names.len() != self.data.ncols() {
            return Err(LeadError::DimensionMismatch(format!(
                "{} channel names for {} data columns",
                self.channel_names.len(),
                self.data.ncols()
            )));
        }
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.fs.to_le_bytes());
        out.extend_from_slice(&(self.subject_id as i32).to_le_bytes());
        out.extend_from_slice(&(self.label as i32).to_le_bytes());
        out.extend_from_slice(&(self.data.ncols() as u32).to_le_bytes());
        out.extend_from_slice(&(self.data.nrows() as u32).to_le_bytes());
        for name in &self.channel_names {
            let len = u16::try_from(name.len()).map_err(|_| data("channel name too long"))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
        }
        for v in self.data.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 5 || &bytes[..5] != MAGIC {
            return Err(LeadError::Format("missing LEADR magic".into()));
        }
        let mut r = Reader { bytes, at: 5 };
        let version = u16::from_le_bytes(r.array()?);
        if version != VERSION {
            return Err(LeadError::Version {
                found: version,
                supported: VERSION,
            });
        }
        let fs = f64::from_le_bytes(r.array()?);
        let subject_id = i32::from_le_bytes(r.array()?);
        let label = i32::from_le_bytes(r.array()?);
        if subject_id <= 0 || label < 0 {
            return Err(data(format!("invalid subject/label ({subject_id}, {label})")));
        }
        let c = u32::from_le_bytes(r.array()?) as usize;
        let t = u32::from_le_bytes(r.array()?) as usize;
        let mut channel_names = Vec::with_capacity(c);
        for _ in 0..c {
            let len = u16::from_le_bytes(r.array()?) as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| LeadError::Format("channel name is not UTF-8".into()))?;
            channel_names.push(name.to_string());
        }
        let expected = (t * c * 4) as u64;
        let found = (bytes.len() - r.at) as u64;
        if expected != found {
            return Err(LeadError::Length { expected, found });
        }
        let vals: Vec<f32> = bytes[r.at..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        Ok(RawRecording {
            subject_id: subject_id as u32,
            label: label as u32,
            fs,
            channel_names,
            data: Array2::from_shape_vec((t, c), vals).expect("length checked"),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| LeadError::io(path, e))?;
        Self::decode(&bytes).map_err(|e| e.in_file(path))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()?).map_err(|e| LeadError::io(path, e))
    }

    /// Attach montage coordinates; unknown channel names are reported by name.
    pub fn to_trial(&self, montage: &Montage) -> Result<RawTrial> {
        let coords = montage.positions(&self.channel_names)?;
        RawTrial::new(
            self.data.mapv(f64::from),
            self.channel_names.clone(),
            coords,
            self.fs,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_coordinates() {
        let rec = RawRecording {
            subject_id: 4,
            label: 1,
            fs: 256.0,
            channel_names: vec!["Cz".into(), "T7".into()],
            data: Array2::from_shape_fn((10, 2), |(i, j)| i as f32 - j as f32),
        };
        let back = RawRecording::decode(&rec.encode().unwrap()).unwrap();
        assert_eq!(back, rec);
        let trial = back.to_trial(&Montage::standard()).unwrap();
        assert_eq!(trial.coords[1], Montage::standard().position("T3").unwrap());

        let bad = RawRecording {
            channel_names: vec!["Cz".into(), "Q99".into()],
            ..rec.clone()
        };
        let err = bad.to_trial(&Montage::standard()).unwrap_err();
        assert!(err.to_string().contains("Q99"));

        let bytes = rec.encode().unwrap();
        assert!(matches!(RawRecording::decode(&bytes[..bytes.len() - 2]), Err(LeadError::Length { .. })));
    }
}
