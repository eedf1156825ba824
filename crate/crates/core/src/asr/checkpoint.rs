//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes   "ADVBCKPT"
//! version      u32       1
//! header_len   u32
//! header       JSON      {"alphabet": [...], "feature_cfg": {...}, "dims": {...}}
//! tensors      9 ×       norm.mean, norm.std, w1, b1, wx, wh, bh, wo, bo
//!                        each: u64 element count, then f64 values (row-major)
//! ```
//!
//! Tensor values are stored as raw IEEE-754 bits, so a loaded model
//! reproduces the saved model's logits bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AcousticModel, Alphabet, AsrError, InputNorm, ModelDims, Params};
use crate::features::FeatureConfig;

pub const MAGIC: &[u8; 8] = b"ADVBCKPT";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    alphabet: Alphabet,
    feature_cfg: FeatureConfig,
    dims: ModelDims,
}

fn write_tensor(w: &mut impl Write, data: &[f64]) -> std::io::Result<()> {
    w.write_all(&(data.len() as u64).to_le_bytes())?;
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32, AsrError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_tensor(r: &mut impl Read, expected: usize) -> Result<Vec<f64>, AsrError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    let n = u64::from_le_bytes(b) as usize;
    if n != expected {
        return Err(AsrError::Checkpoint(format!("tensor has {n} values, expected {expected}")));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

impl AcousticModel {
    pub fn write_checkpoint(&self, w: &mut impl Write) -> Result<(), AsrError> {
        let header = serde_json::to_vec(&Header {
            alphabet: self.alphabet.clone(),
            feature_cfg: self.feature_cfg,
            dims: self.dims,
        })
        .map_err(|e| AsrError::Checkpoint(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        write_tensor(w, &self.norm.mean)?;
        write_tensor(w, &self.norm.std)?;
        for t in self.params.tensors() {
            write_tensor(w, t)?;
        }
        Ok(())
    }

    pub fn read_checkpoint(r: &mut impl Read) -> Result<Self, AsrError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(AsrError::Checkpoint("bad magic".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(AsrError::Checkpoint(format!("unsupported version {version}")));
        }
        let len = read_u32(r)? as usize;
        let mut header = vec![0u8; len];
        r.read_exact(&mut header)?;
        let header: Header =
            serde_json::from_slice(&header).map_err(|e| AsrError::Checkpoint(e.to_string()))?;
        let n = header.feature_cfg.n_ceps;
        let norm = InputNorm {
            mean: read_tensor(r, n)?,
            std: read_tensor(r, n)?,
        };
        let mut params = Params::zeros(n, header.dims, header.alphabet.n_outputs());
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        for (dst, len) in params.tensors_mut().into_iter().zip(shapes) {
            dst.copy_from_slice(&read_tensor(r, len)?);
        }
        Ok(Self {
            alphabet: header.alphabet,
            feature_cfg: header.feature_cfg,
            dims: header.dims,
            norm,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), AsrError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_checkpoint(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AsrError> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_checkpoint(&mut r)
    }
}
