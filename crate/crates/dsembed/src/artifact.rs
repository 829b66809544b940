//! Trained models and their on-disk container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "DSEMBMDL" | u32 version | u64 header length | header (JSON)
//! u32 tensor count | per tensor: u32 name length, name, u32 rank,
//!                    u64 per dimension, f64 values in row-major order
//! ```
//!
//! The header holds the vocabulary, model config, frozen parameter names,
//! the per-epoch training log and the seed.

use std::fs;
use std::path::Path;

use dsembed_core::conllu::Vocabulary;
use dsembed_core::{ModelConfig, ParserModel};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

pub const MAGIC: &[u8; 8] = b"DSEMBMDL";
pub const FORMAT_VERSION: u32 = 1;

/// One epoch of training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub tune_uas: f64,
    pub tune_las: f64,
}

#[derive(Debug, Clone)]
pub struct ModelArtifact {
    pub model: ParserModel,
    pub vocab: Vocabulary,
    pub seed: u64,
    pub log: Vec<EpochRecord>,
    /// 1-based epoch the parameters come from.
    pub best_epoch: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    vocab: Vocabulary,
    config: ModelConfig,
    frozen: Vec<String>,
    log: Vec<EpochRecord>,
    best_epoch: usize,
    seed: u64,
}

impl ModelArtifact {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            vocab: self.vocab.clone(),
            config: self.model.config,
            frozen: self.model.frozen().map(str::to_string).collect(),
            log: self.log.clone(),
            best_epoch: self.best_epoch,
            seed: self.seed,
        };
        let header = serde_json::to_vec(&header)?;
        let params = self.model.named_parameters();
        let mut out = Vec::with_capacity(64 + header.len() + 8 * self.model.n_parameters());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(params.len() as u32).to_le_bytes());
        for (name, t) in &params {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data().iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("bad magic, not a model file".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "format version {version}, this build reads {FORMAT_VERSION}"
            )));
        }
        let len = r.u64()? as usize;
        let header: Header = serde_json::from_slice(r.take(len)?)?;
        let count = r.u32()? as usize;
        let mut blobs = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            blobs.push((name, shape, data));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let mut model = ParserModel::new(header.config, 0)?;
        model.load_parameters(&blobs)?;
        for name in &header.frozen {
            model.freeze(name)?;
        }
        Ok(ModelArtifact {
            model,
            vocab: header.vocab.reindex(),
            seed: header.seed,
            log: header.log,
            best_epoch: header.best_epoch,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        fs::write(path, self.to_bytes()?).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(io_err(path))?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
