//! Binary checkpoint: magic, version, a JSON header carrying the model config
//! and vocabulary manifest, then all parameters as little-endian f32.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Layout, Model, ModelConfig, Scalar};
use crate::error::{Error, Result};
use crate::hash::sha256_hex;
use crate::vocab::Vocabulary;

const MAGIC: &[u8; 8] = b"LNAVMODL";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab_manifest: String,
    tensors: Vec<(String, Vec<usize>)>,
    meta: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub vocab: Vocabulary,
    pub meta: serde_json::Value,
}

pub fn checkpoint_bytes<F: Scalar>(model: &Model<F>, vocab: &Vocabulary, meta: &serde_json::Value) -> Vec<u8> {
    let header = Header {
        config: model.config,
        vocab_manifest: vocab.manifest_json(),
        tensors: model.layout.tensors.iter().map(|t| (t.name.clone(), t.shape.clone())).collect(),
        meta: meta.clone(),
    };
    let hjson = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(20 + hjson.len() + 4 * model.params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(hjson.len() as u64).to_le_bytes());
    out.extend_from_slice(&hjson);
    for p in &model.params {
        out.extend_from_slice(&(p.f64() as f32).to_le_bytes());
    }
    out
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |d: &str| Error::malformed("checkpoint", d);
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("missing magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            what: "checkpoint".into(),
            found: version,
        });
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(20..20 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body)?;
    header.config.validate()?;
    let vocab = Vocabulary::from_manifest_json(&header.vocab_manifest)?;
    if vocab.len() != header.config.vocab_size {
        return Err(bad("vocabulary size differs from model config"));
    }
    let layout = Layout::new(&header.config);
    let names: Vec<(String, Vec<usize>)> = layout.tensors.iter().map(|t| (t.name.clone(), t.shape.clone())).collect();
    if names != header.tensors {
        return Err(bad("tensor layout differs"));
    }
    let data = &bytes[20 + hlen..];
    if data.len() != 4 * layout.total {
        return Err(bad("parameter byte count"));
    }
    let params: Vec<f32> = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    if params.iter().any(|p| !p.is_finite()) {
        return Err(bad("non-finite parameter"));
    }
    Ok(Checkpoint {
        model: Model {
            config: header.config,
            params,
            layout,
        },
        vocab,
        meta: header.meta,
    })
}

/// Writes the checkpoint and returns its SHA-256.
pub fn save_checkpoint<F: Scalar>(
    path: &Path,
    model: &Model<F>,
    vocab: &Vocabulary,
    meta: &serde_json::Value,
) -> Result<String> {
    let bytes = checkpoint_bytes(model, vocab, meta);
    std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn load_checkpoint(path: &Path) -> Result<(Checkpoint, String)> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok((parse_checkpoint(&bytes)?, sha256_hex(&bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let vocab = Vocabulary::new(8);
        let cfg = ModelConfig {
            context: 16,
            d_model: 8,
            n_heads: 2,
            ..ModelConfig::new(vocab.len())
        };
        let m = Model::<f32>::new(cfg).unwrap();
        let meta = serde_json::json!({"seed": 3});
        let bytes = checkpoint_bytes(&m, &vocab, &meta);
        let ck = parse_checkpoint(&bytes).unwrap();
        assert_eq!(ck.model.params, m.params);
        assert_eq!(ck.vocab, vocab);
        assert_eq!(ck.meta, meta);
        assert_eq!(checkpoint_bytes(&ck.model, &ck.vocab, &ck.meta), bytes);
        let mut broken = bytes.clone();
        broken.truncate(bytes.len() - 1);
        assert!(parse_checkpoint(&broken).is_err());
    }
}
