//! Versioned JSON checkpoint: config, provenance hashes, and flat named
//! parameter blocks.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{EncoderModel, ModelConfig, Tensor, Weights};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NamedBlock {
    name: String,
    shape: Vec<usize>,
    data: Vec<f32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointFile {
    format: u32,
    config: ModelConfig,
    vocab_hash: String,
    /// Hash of the training configuration that produced the weights.
    config_hash: String,
    mlm_trained: bool,
    blocks: Vec<NamedBlock>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: EncoderModel<f32>,
    pub vocab_hash: String,
    pub config_hash: String,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT,
            config: self.model.config.clone(),
            vocab_hash: self.vocab_hash.clone(),
            config_hash: self.config_hash.clone(),
            mlm_trained: self.model.mlm_trained,
            blocks: self
                .model
                .weights
                .blocks()
                .into_iter()
                .map(|(name, t)| NamedBlock {
                    name,
                    shape: t.shape.clone(),
                    data: t.data.clone(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text)?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unsupported checkpoint format {}", file.format)));
        }
        file.config.validate()?;
        let mut weights = Weights::<f32>::zeros(&file.config);
        let expected = weights.blocks().len();
        if file.blocks.len() != expected {
            return Err(Error::Checkpoint(format!(
                "expected {expected} parameter blocks, found {}",
                file.blocks.len()
            )));
        }
        for ((name, slot), block) in weights.blocks_mut().into_iter().zip(file.blocks) {
            if block.name != name {
                return Err(Error::Checkpoint(format!("block `{}` where `{name}` was expected", block.name)));
            }
            if block.shape != slot.shape || block.data.len() != slot.data.len() {
                return Err(Error::Checkpoint(format!(
                    "block `{name}` has shape {:?}, config implies {:?}",
                    block.shape, slot.shape
                )));
            }
            *slot = Tensor {
                shape: block.shape,
                data: block.data,
            };
        }
        if let Some(block) = weights.first_non_finite() {
            return Err(Error::NonFinite(format!("checkpoint block {block}")));
        }
        Ok(Checkpoint {
            model: EncoderModel {
                config: file.config,
                weights,
                mlm_trained: file.mlm_trained,
            },
            vocab_hash: file.vocab_hash,
            config_hash: file.config_hash,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> EncoderModel<f32> {
        let cfg = ModelConfig {
            vocab_size: 12,
            d_model: 8,
            n_layers: 1,
            n_heads: 2,
            d_ff: 16,
            max_seq_len: 10,
            embed_std: 0.1,
        };
        EncoderModel::new(cfg, 5).unwrap()
    }

    #[test]
    fn roundtrip_is_exact() {
        let ck = Checkpoint {
            model: model(),
            vocab_hash: "v".into(),
            config_hash: "c".into(),
        };
        let text = ck.to_json().unwrap();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let ck = Checkpoint {
            model: model(),
            vocab_hash: "v".into(),
            config_hash: "c".into(),
        };
        let mut v: serde_json::Value = serde_json::from_str(&ck.to_json().unwrap()).unwrap();
        v["config"]["d_ff"] = serde_json::json!(32);
        let err = Checkpoint::from_json(&v.to_string()).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)), "{err}");
    }
}
