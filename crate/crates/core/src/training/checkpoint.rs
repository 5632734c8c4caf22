//! Binary checkpoint: `SCS1`, a little-endian `u32` version, a `u32`
//! header length, a JSON header naming every tensor, then the raw
//! little-endian `f32` payloads.

use std::collections::BTreeMap;
use std::path::Path;

use scs_tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Result, ScsError};
use crate::model::{Generator, ParamSet};

pub const MAGIC: &[u8; 4] = b"SCS1";
pub const VERSION: u32 = 1;

pub const GEN_PREFIX: &str = "gen/";
pub const DISC_PREFIX: &str = "disc/";
pub const OPT_PREFIX: &str = "opt/";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: RunConfig,
    /// Number of completed training steps.
    pub step: u64,
    /// Update count per optimized parameter, keyed like the tensors.
    pub adam_steps: BTreeMap<String, u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    meta: CheckpointMeta,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: BTreeMap<String, Tensor<f32>>,
}

fn corrupt(msg: impl Into<String>) -> ScsError {
    ScsError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0;
        let entries = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let e = TensorEntry {
                    name: name.clone(),
                    dtype: "f32".into(),
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += t.numel() * 4;
                e
            })
            .collect();
        let header = serde_json::to_vec(&Header {
            meta: self.meta.clone(),
            tensors: entries,
        })
        .map_err(|e| corrupt(format!("header encoding failed: {e}")))?;
        let header_len = u32::try_from(header.len()).map_err(|_| corrupt("header too large"))?;
        let mut out = Vec::with_capacity(12 + header.len() + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&header_len.to_le_bytes());
        out.extend_from_slice(&header);
        for t in self.tensors.values() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(corrupt("not a checkpoint (bad magic)"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        let version = word(4);
        if version != VERSION {
            return Err(corrupt(format!(
                "unsupported version {version} (this build reads {VERSION})"
            )));
        }
        let header_len = word(8) as usize;
        let body = 12 + header_len;
        let header: Header = serde_json::from_slice(
            bytes
                .get(12..body)
                .ok_or_else(|| corrupt("truncated header"))?,
        )
        .map_err(|e| corrupt(format!("malformed header: {e}")))?;
        let payload = &bytes[body..];
        let mut tensors = BTreeMap::new();
        for e in header.tensors {
            if e.dtype != "f32" {
                return Err(corrupt(format!(
                    "tensor `{}` has unsupported dtype {}",
                    e.name, e.dtype
                )));
            }
            let n: usize = e.shape.iter().product();
            let raw = payload.get(e.offset..e.offset + 4 * n).ok_or_else(|| {
                corrupt(format!("tensor `{}` runs past the end of the file", e.name))
            })?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            tensors.insert(e.name, Tensor::new(e.shape, data)?);
        }
        Ok(Self {
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        // write-then-rename so a crash never leaves a half-written file
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, bytes).map_err(|e| ScsError::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| ScsError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| ScsError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            ScsError::Checkpoint(m) => ScsError::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Tensors under `prefix`, with the prefix removed.
    pub fn params(&self, prefix: &str) -> ParamSet<f32> {
        ParamSet::from_map(
            self.tensors
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(prefix).map(|n| (n.to_string(), v.clone())))
                .collect(),
        )
    }

    /// The generator described by the stored config, with its weights.
    pub fn generator(&self) -> Result<(Generator, ParamSet<f32>)> {
        let gen = Generator::new(self.meta.config.model.clone())?;
        let params = self.params(GEN_PREFIX);
        params.matches_specs(&gen.param_specs())?;
        Ok((gen, params))
    }
}
