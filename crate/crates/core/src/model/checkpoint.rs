use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, ModelParams, ParamId};
use crate::autodiff::Tensor;
use crate::corpus::Vocabulary;

pub const CHECKPOINT_VERSION: u32 = 1;

const MAGIC: &[u8; 8] = b"PLNSCKPT";
const FORMAT: &str = "protolens-checkpoint";

/// Everything needed to run a trained model: parameters, their configuration
/// and the vocabulary the ids refer to.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    pub vocab: Vocabulary,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    config: ModelConfig,
    vocab: String,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

impl Checkpoint {
    /// Layout: magic, little-endian u32 header length, JSON header, then the
    /// tensors as little-endian f32 in header order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            format: FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: *self.params.config(),
            vocab: self.vocab.to_json(),
            tensors: ParamId::ALL
                .iter()
                .zip(self.params.tensors())
                .map(|(id, t)| TensorEntry {
                    name: id.name().to_string(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(12 + header.len() + 4 * self.params.count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for t in self.params.tensors() {
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, ModelError> {
        let corrupt = |m: &str| ModelError::Corrupt(m.to_string());
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(corrupt("not a checkpoint file"));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let body = 12usize
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| corrupt("truncated header"))?;
        let header: Header =
            serde_json::from_slice(&bytes[12..body]).map_err(|e| ModelError::Corrupt(e.to_string()))?;
        if header.format != FORMAT {
            return Err(corrupt("unknown checkpoint format"));
        }
        if header.version != CHECKPOINT_VERSION {
            return Err(ModelError::Version {
                found: header.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        header.config.validate()?;
        let vocab = Vocabulary::from_json(&header.vocab).map_err(|e| ModelError::Corrupt(e.to_string()))?;
        if header.tensors.len() != ParamId::ALL.len() {
            return Err(corrupt("wrong number of tensors"));
        }
        for (id, entry) in ParamId::ALL.iter().zip(&header.tensors) {
            let expected = id.shape(&header.config, vocab.len()).to_vec();
            if entry.name != id.name() || entry.shape != expected {
                return Err(ModelError::ShapeMismatch {
                    name: entry.name.clone(),
                    found: entry.shape.clone(),
                    expected,
                });
            }
        }
        let total: usize = header.tensors.iter().map(|e| e.shape.iter().product::<usize>()).sum();
        let data = &bytes[body..];
        if data.len() != 4 * total {
            return Err(ModelError::Corrupt(format!(
                "expected {} bytes of tensor data, found {}",
                4 * total,
                data.len()
            )));
        }
        let mut floats = data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
        let tensors = header
            .tensors
            .iter()
            .map(|e| {
                let values = floats.by_ref().take(e.shape.iter().product()).collect();
                Tensor::new(e.shape.clone(), values).map_err(ModelError::from)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let params = ModelParams::from_tensors(header.config, vocab.len(), tensors)?;
        Ok(Checkpoint { params, vocab })
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), ModelError> {
    fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    Checkpoint::from_bytes(&fs::read(path)?)
}
