//! LEADW: named-parameter archive.
//!
//! ```text
//! "LEADW" | version: u16 | config_len: u32 | config (TOML, UTF-8)
//! n_tensors: u32 | per tensor: name_len: u16, name, dtype: u8 (0 = f32),
//!                  ndim: u8, dims: u32 * ndim, offset: u64
//! payload: little-endian f32, offsets relative to the payload start
//! ```

use std::path::Path;

use ndarray::Array2;

use super::{Model, ModelConfig, ParameterSet};
use crate::error::{LeadError, Result};
use crate::Scalar;

pub const MAGIC: &[u8; 5] = b"LEADW";
pub const VERSION: u16 = 1;
const DTYPE_F32: u8 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParameterSet<f32>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or(LeadError::Length {
            expected: (self.at + n) as u64,
            found: self.bytes.len() as u64,
        })?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(model: &Model<T>) -> Self {
        Checkpoint {
            config: model.cfg.clone(),
            params: model.params.cast(),
        }
    }

    /// Rebuild a model, checking every tensor against `cfg`'s layout.
    pub fn to_model<T: Scalar>(&self, cfg: &ModelConfig) -> Result<Model<T>> {
        Model::from_params(cfg.clone(), self.params.cast())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let config = toml::to_string(&self.config)
            .map_err(|e| LeadError::Config(format!("cannot serialize model config: {e}")))?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(config.len() as u32).to_le_bytes());
        out.extend_from_slice(config.as_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        let mut offset = 0u64;
        for (name, t) in self.params.iter() {
            if !t.iter().all(|v| v.is_finite()) {
                return Err(LeadError::Data(format!("parameter {name} is not finite")));
            }
            let name_bytes = name.as_bytes();
            out.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
            out.extend_from_slice(name_bytes);
            out.push(DTYPE_F32);
            out.push(2);
            out.extend_from_slice(&(t.nrows() as u32).to_le_bytes());
            out.extend_from_slice(&(t.ncols() as u32).to_le_bytes());
            out.extend_from_slice(&offset.to_le_bytes());
            offset += 4 * t.len() as u64;
        }
        for (_, t) in self.params.iter() {
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(5)? != MAGIC {
            return Err(LeadError::Format("not a LEADW checkpoint (bad magic)".into()));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(LeadError::Version {
                found: version,
                supported: VERSION,
            });
        }
        let config_len = r.u32()? as usize;
        let config_text = std::str::from_utf8(r.take(config_len)?)
            .map_err(|_| LeadError::Format("checkpoint config is not UTF-8".into()))?;
        let config: ModelConfig = toml::from_str(config_text)
            .map_err(|e| LeadError::Format(format!("checkpoint config: {e}")))?;
        let n = r.u32()? as usize;
        let mut entries = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| LeadError::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let dtype = r.u8()?;
            if dtype != DTYPE_F32 {
                return Err(LeadError::Format(format!("tensor {name}: unsupported dtype {dtype}")));
            }
            let ndim = r.u8()? as usize;
            let dims: Vec<usize> = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
            let shape = match dims.as_slice() {
                [n] => (1, *n),
                [a, b] => (*a, *b),
                _ => return Err(LeadError::Format(format!("tensor {name}: {ndim} dimensions unsupported"))),
            };
            let offset = r.u64()? as usize;
            entries.push((name, shape, offset));
        }
        let payload = &bytes[r.at..];
        let mut params = ParameterSet::new();
        let mut expected_end = 0usize;
        for (name, (a, b), offset) in entries {
            let count = a * b;
            let end = offset + 4 * count;
            if end > payload.len() {
                return Err(LeadError::Length {
                    expected: (r.at + end) as u64,
                    found: bytes.len() as u64,
                });
            }
            let vals: Vec<f32> = payload[offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            if !vals.iter().all(|v| v.is_finite()) {
                return Err(LeadError::Data(format!("tensor {name} has non-finite values")));
            }
            if params.index_of(&name).is_some() {
                return Err(LeadError::Format(format!("tensor {name} appears twice")));
            }
            params.push(name, Array2::from_shape_vec((a, b), vals).expect("length checked"));
            expected_end = expected_end.max(end);
        }
        if expected_end != payload.len() {
            return Err(LeadError::Length {
                expected: (r.at + expected_end) as u64,
                found: bytes.len() as u64,
            });
        }
        Ok(Checkpoint { config, params })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.encode().map_err(|e| e.in_file(path))?;
        std::fs::write(path, bytes).map_err(|e| LeadError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| LeadError::io(path, e))?;
        Self::decode(&bytes).map_err(|e| e.in_file(path))
    }
}
