//! Binary checkpoint format.
//!
//! ```text
//! "SPM1" | u64 LE header length | UTF-8 JSON header | f32 LE payload
//! ```
//!
//! The header carries the format version, the training config, the
//! vocabulary and its digest, the training history and a tensor directory
//! (`name`, `rows`, `cols`, byte `offset` into the payload). Tensors are
//! stored in directory order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{expected_shapes, Model, EMBEDDING_NAME};
use crate::numerics::{ParamStore, Tensor2D};
use crate::text::Vocabulary;
use crate::train::TrainConfig;

pub const MAGIC: &[u8; 4] = b"SPM1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_mrr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor2D,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: TrainConfig,
    pub vocab_digest: String,
    pub vocab: Vec<String>,
    pub oov_seed: u64,
    /// Values are always representable in `f32`.
    pub tensors: Vec<NamedTensor>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_dev_mrr: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: TrainConfig,
    vocab_digest: String,
    oov_seed: u64,
    vocab: Vec<String>,
    history: Vec<EpochRecord>,
    best_epoch: Option<usize>,
    best_dev_mrr: Option<f64>,
    tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    /// Snapshot of `model`'s parameters, rounded to `f32`.
    pub fn from_model(model: &Model, config: &TrainConfig, history: Vec<EpochRecord>, best: Option<(usize, f64)>) -> Self {
        let tensors = model
            .params()
            .iter()
            .map(|(_, p)| NamedTensor {
                name: p.name.clone(),
                tensor: p.value.round_to_f32(),
            })
            .collect();
        Checkpoint {
            format_version: FORMAT_VERSION,
            config: config.clone(),
            vocab_digest: model.vocab().digest(),
            vocab: model.vocab().tokens().to_vec(),
            oov_seed: model.oov_seed(),
            tensors,
            history,
            best_epoch: best.map(|b| b.0),
            best_dev_mrr: best.map(|b| b.1),
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor2D> {
        self.tensors.iter().find(|t| t.name == name).map(|t| &t.tensor)
    }

    pub fn embedding_dim(&self) -> Result<usize> {
        self.tensor(EMBEDDING_NAME)
            .map(Tensor2D::cols)
            .ok_or_else(|| Error::Corruption("missing embedding tensor".into()))
    }

    /// Checks every tensor against the shapes implied by `hidden`.
    pub fn check_shapes(&self, hidden: usize) -> Result<()> {
        let dim = self.embedding_dim()?;
        let expected = expected_shapes(self.vocab.len() + 1, dim, hidden);
        if expected.len() != self.tensors.len() {
            return Err(Error::Corruption(format!(
                "expected {} tensors, found {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape), t) in expected.into_iter().zip(&self.tensors) {
            if name != t.name {
                return Err(Error::Corruption(format!(
                    "expected tensor {name}, found {}",
                    t.name
                )));
            }
            if shape != t.tensor.shape() {
                return Err(Error::ShapeMismatch {
                    name,
                    expected: shape,
                    found: t.tensor.shape(),
                });
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut offset = 0;
        for t in &self.tensors {
            entries.push(TensorEntry {
                name: t.name.clone(),
                rows: t.tensor.rows(),
                cols: t.tensor.cols(),
                offset,
            });
            offset += t.tensor.len() * 4;
        }
        let header = Header {
            format_version: self.format_version,
            config: self.config.clone(),
            vocab_digest: self.vocab_digest.clone(),
            oov_seed: self.oov_seed,
            vocab: self.vocab.clone(),
            history: self.history.clone(),
            best_epoch: self.best_epoch,
            best_dev_mrr: self.best_dev_mrr,
            tensors: entries,
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Corruption(e.to_string()))?;
        let mut out = Vec::with_capacity(12 + json.len() + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in &self.tensors {
            for &v in t.tensor.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| Error::Corruption(m.to_string());
        if bytes.len() < 12 {
            return Err(corrupt("file too short"));
        }
        if &bytes[..4] != MAGIC {
            return Err(corrupt("bad magic bytes"));
        }
        let len = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes")) as usize;
        let header_end = 12usize
            .checked_add(len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| corrupt("truncated header"))?;
        let raw: serde_json::Value =
            serde_json::from_slice(&bytes[12..header_end]).map_err(|e| Error::Corruption(format!("header: {e}")))?;
        let found = raw
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| corrupt("header lacks format_version"))? as u32;
        if found != FORMAT_VERSION {
            return Err(Error::Version {
                expected: FORMAT_VERSION,
                found,
            });
        }
        let header: Header = serde_json::from_value(raw).map_err(|e| Error::Corruption(format!("header: {e}")))?;

        let payload = &bytes[header_end..];
        let mut expected_offset = 0usize;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in &header.tensors {
            if entry.offset != expected_offset {
                return Err(Error::Corruption(format!(
                    "tensor {} at offset {}, expected {expected_offset}",
                    entry.name, entry.offset
                )));
            }
            let n = entry
                .rows
                .checked_mul(entry.cols)
                .ok_or_else(|| corrupt("tensor size overflow"))?;
            let end = entry.offset + n * 4;
            if end > payload.len() {
                return Err(Error::Corruption(format!("tensor {} is truncated", entry.name)));
            }
            let data = payload[entry.offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect();
            tensors.push(NamedTensor {
                name: entry.name.clone(),
                tensor: Tensor2D::from_vec(entry.rows, entry.cols, data)?,
            });
            expected_offset = end;
        }
        if expected_offset != payload.len() {
            return Err(Error::Corruption(format!(
                "{} trailing payload bytes",
                payload.len() - expected_offset
            )));
        }
        let ckpt = Checkpoint {
            format_version: header.format_version,
            config: header.config,
            vocab_digest: header.vocab_digest,
            vocab: header.vocab,
            oov_seed: header.oov_seed,
            tensors,
            history: header.history,
            best_epoch: header.best_epoch,
            best_dev_mrr: header.best_dev_mrr,
        };
        if Vocabulary::from_tokens(ckpt.vocab.iter().cloned()).digest() != ckpt.vocab_digest {
            return Err(corrupt("vocabulary digest mismatch"));
        }
        ckpt.check_shapes(ckpt.config.hidden).map_err(|e| match e {
            Error::ShapeMismatch { name, expected, found } => Error::Corruption(format!(
                "tensor {name} has shape {found:?}, config implies {expected:?}"
            )),
            other => other,
        })?;
        Ok(ckpt)
    }

    /// Hex SHA-256 of the serialized bytes.
    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_bytes()?)))
    }

    /// Model built from this checkpoint's tensors and config.
    pub fn to_model(&self) -> Result<Model> {
        let mut store = ParamStore::new();
        for t in &self.tensors {
            store.insert(t.name.clone(), t.tensor.clone())?;
        }
        let vocab = Vocabulary::from_tokens(self.vocab.iter().cloned());
        Model::from_parts(self.config.model_config(), vocab, self.oov_seed, store)
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ckpt.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
