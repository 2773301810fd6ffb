//! Single-file parameter checkpoints.
//!
//! Layout: the magic bytes `ESIBCKPT`, a little-endian `u32` format version,
//! a little-endian `u32` header length, the JSON header, then every tensor
//! listed in the header as little-endian `f32` values, in header order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use earlysib_core::detect::{Detector, DetectorConfig};
use earlysib_core::earlysib::{EarlySibModel, ModelConfig};
use earlysib_core::nn::ParamStore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PipelineError, Result};

pub const MAGIC: &[u8; 8] = b"ESIBCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    /// `early-sib` or `detector`.
    pub kind: String,
    pub config: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

/// SHA-256 over the names, shapes and `f32` bytes of every tensor.
pub fn param_hash(params: &ParamStore) -> String {
    let mut h = Sha256::new();
    for id in params.ids() {
        let t = params.get(id);
        h.update(params.name(id).as_bytes());
        h.update([0]);
        h.update((t.rows as u64).to_le_bytes());
        h.update((t.cols as u64).to_le_bytes());
        for &v in &t.data {
            h.update((v as f32).to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn encode(kind: &str, config: serde_json::Value, params: &ParamStore, meta: BTreeMap<String, String>) -> Result<Vec<u8>> {
    let tensors: Vec<TensorEntry> = params
        .ids()
        .map(|id| {
            let t = params.get(id);
            TensorEntry { name: params.name(id).into(), rows: t.rows, cols: t.cols }
        })
        .collect();
    let header = Header { kind: kind.into(), config, tensors, meta };
    let json = serde_json::to_vec(&header).map_err(|e| PipelineError::Runtime(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + json.len() + 4 * params.scalar_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for id in params.ids() {
        for &v in &params.get(id).data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

fn invalid(path: &Path, why: impl std::fmt::Display) -> PipelineError {
    PipelineError::Validation(format!("{}: not a valid checkpoint: {why}", path.display()))
}

/// Splits a checkpoint into its header and raw tensor data.
pub fn read_header(path: &Path) -> Result<(Header, Vec<Vec<f64>>)> {
    let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(invalid(path, "bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(invalid(path, format!("unsupported version {version}")));
    }
    let len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = bytes.get(16..16 + len).ok_or_else(|| invalid(path, "truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| invalid(path, e))?;
    let mut rest = &bytes[16 + len..];
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for t in &header.tensors {
        let n = t.rows * t.cols * 4;
        if rest.len() < n {
            return Err(invalid(path, format!("truncated tensor {}", t.name)));
        }
        let (chunk, tail) = rest.split_at(n);
        tensors.push(chunk.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect());
        rest = tail;
    }
    if !rest.is_empty() {
        return Err(invalid(path, "trailing bytes"));
    }
    Ok((header, tensors))
}

fn fill(params: &mut ParamStore, header: &Header, data: Vec<Vec<f64>>) -> Result<()> {
    if header.tensors.len() != params.len() {
        return Err(PipelineError::Validation(format!(
            "checkpoint holds {} tensors, model expects {}",
            header.tensors.len(),
            params.len()
        )));
    }
    for (t, d) in header.tensors.iter().zip(data) {
        params.load(&t.name, t.rows, t.cols, d)?;
    }
    Ok(())
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| PipelineError::io(path, e))
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| PipelineError::Runtime(e.to_string()))
}

pub fn save_model(path: &Path, model: &EarlySibModel, meta: BTreeMap<String, String>) -> Result<()> {
    write(path, &encode("early-sib", to_value(model.config())?, model.params(), meta)?)
}

pub fn load_model(path: &Path) -> Result<(EarlySibModel, Header)> {
    let (header, data) = read_header(path)?;
    if header.kind != "early-sib" {
        return Err(invalid(path, format!("expected an early-sib checkpoint, found {}", header.kind)));
    }
    let cfg: ModelConfig = serde_json::from_value(header.config.clone()).map_err(|e| invalid(path, e))?;
    let mut model = EarlySibModel::new(cfg)?;
    fill(model.params_mut(), &header, data)?;
    Ok((model, header))
}

pub fn save_detector(path: &Path, det: &Detector, meta: BTreeMap<String, String>) -> Result<()> {
    write(path, &encode("detector", to_value(det.config())?, det.params(), meta)?)
}

pub fn load_detector(path: &Path) -> Result<(Detector, Header)> {
    let (header, data) = read_header(path)?;
    if header.kind != "detector" {
        return Err(invalid(path, format!("expected a detector checkpoint, found {}", header.kind)));
    }
    let cfg: DetectorConfig = serde_json::from_value(header.config.clone()).map_err(|e| invalid(path, e))?;
    let mut det = Detector::new(cfg, None)?;
    fill(det.params_mut(), &header, data)?;
    Ok((det, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use earlysib_core::corpus::{Corpus, Interaction, Kind, Timestamp};
    use earlysib_core::earlysib::EncoderSpec;

    fn small() -> ModelConfig {
        let mut c = ModelConfig::compact();
        c.body = EncoderSpec { vocab_size: 256, dim: 8, heads: 2, layers: 1, max_tokens: 16, trainable: true };
        c.titletag = EncoderSpec { max_tokens: 32, ..c.body };
        c.lstm_hidden = 4;
        c.attention_dim = 4;
        c.fusion_dim = 4;
        c
    }

    #[test]
    fn model_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut model = EarlySibModel::new(small()).unwrap();
        model.params_mut().round_to_f32();
        save_model(&path, &model, BTreeMap::from([("fold".into(), "0".into())])).unwrap();
        let (back, header) = load_model(&path).unwrap();
        assert_eq!(header.meta["fold"], "0");
        assert_eq!(param_hash(back.params()), param_hash(model.params()));
        let corpus = Corpus::new(vec![Interaction {
            id: "a".into(),
            user: "u".into(),
            kind: Kind::Post,
            timestamp: Timestamp(1),
            thread_id: "t".into(),
            title: Some("t".into()),
            body: "b".into(),
            tags: vec![],
            parent_id: None,
        }])
        .unwrap();
        assert_eq!(back.forward(&corpus, &[0]).unwrap(), model.forward(&corpus, &[0]).unwrap());
        assert!(load_detector(&path).is_err());
    }

    #[test]
    fn rejects_damaged_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let model = EarlySibModel::new(small()).unwrap();
        save_model(&path, &model, BTreeMap::new()).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 2]).unwrap();
        assert!(matches!(load_model(&path), Err(PipelineError::Validation(_))));
        fs::write(&path, b"NOTACKPT\x01\0\0\0\0\0\0\0").unwrap();
        assert!(load_model(&path).is_err());
    }

    #[test]
    fn hash_tracks_values() {
        let mut model = EarlySibModel::new(small()).unwrap();
        let before = param_hash(model.params());
        let id = model.params().ids().next().unwrap();
        model.params_mut().get_mut(id).data[0] += 1.0;
        assert_ne!(before, param_hash(model.params()));
    }
}
