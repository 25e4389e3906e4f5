//! Checkpoint container: one line of JSON manifest, a newline, then every
//! tensor as little-endian `f32` values (row-major) in manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Mat, ModelConfig, ModelParameters, ParamKind};
use crate::error::{JetError, Result};

pub const FORMAT: &str = "jet-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub kind: ParamKind,
    pub shape: [usize; 2],
    /// Byte offset into the payload.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub seed: u64,
    /// Hex fingerprint of the vocabulary the model was trained with.
    pub vocab_fingerprint: Option<String>,
    pub tensors: Vec<TensorEntry>,
}

pub fn to_bytes(params: &ModelParameters, vocab_fingerprint: Option<u64>) -> Result<Vec<u8>> {
    let mut offset = 0;
    let tensors = params
        .values
        .iter()
        .zip(&params.meta)
        .map(|(v, m)| {
            let entry = TensorEntry {
                name: m.name.clone(),
                kind: m.kind,
                shape: [v.nrows(), v.ncols()],
                offset,
            };
            offset += v.len() * 4;
            entry
        })
        .collect();
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        config: params.config.clone(),
        seed: params.config.seed,
        vocab_fingerprint: vocab_fingerprint.map(|f| format!("{f:016x}")),
        tensors,
    };
    let mut out = serde_json::to_vec(&manifest)?;
    out.push(b'\n');
    out.reserve(offset);
    for v in &params.values {
        for x in v.iter() {
            out.extend_from_slice(&(*x as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<(ModelParameters, Manifest)> {
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| JetError::Checkpoint("missing manifest terminator".into()))?;
    let manifest: Manifest = serde_json::from_slice(&bytes[..split])
        .map_err(|e| JetError::Checkpoint(format!("bad manifest: {e}")))?;
    if manifest.format != FORMAT || manifest.version != VERSION {
        return Err(JetError::Checkpoint(format!(
            "unsupported container {} v{}",
            manifest.format, manifest.version
        )));
    }
    let payload = &bytes[split + 1..];
    let mut values = Vec::with_capacity(manifest.tensors.len());
    for t in &manifest.tensors {
        let [rows, cols] = t.shape;
        let end = t.offset + rows * cols * 4;
        let raw = payload.get(t.offset..end).ok_or_else(|| {
            JetError::Checkpoint(format!("tensor `{}` runs past the payload", t.name))
        })?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        values.push(Mat::from_shape_vec((rows, cols), data).expect("length matches shape"));
    }
    let params = ModelParameters::from_values(manifest.config.clone(), values)?;
    if params.meta.iter().zip(&manifest.tensors).any(|(m, t)| m.name != t.name) {
        return Err(JetError::Checkpoint("tensor names do not match the layout".into()));
    }
    Ok((params, manifest))
}

pub fn save(path: &Path, params: &ModelParameters, vocab_fingerprint: Option<u64>) -> Result<()> {
    fs::write(path, to_bytes(params, vocab_fingerprint)?).map_err(|e| JetError::io(path, e))
}

pub fn load(path: &Path) -> Result<(ModelParameters, Manifest)> {
    let bytes = fs::read(path).map_err(|e| JetError::io(path, e))?;
    from_bytes(&bytes)
}

/// Fails unless the checkpoint was trained with the given vocabulary.
pub fn check_vocab(manifest: &Manifest, fingerprint: u64, vocab_size: usize) -> Result<()> {
    if manifest.config.vocab_size != vocab_size {
        return Err(JetError::Checkpoint(format!(
            "checkpoint vocabulary size {} does not match vocabulary of size {vocab_size}",
            manifest.config.vocab_size
        )));
    }
    match &manifest.vocab_fingerprint {
        Some(f) if *f != format!("{fingerprint:016x}") => Err(JetError::Checkpoint(
            "checkpoint was trained with a different vocabulary".into(),
        )),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_parameters;

    #[test]
    fn round_trip_at_f32_precision() {
        let cfg = ModelConfig {
            d_model: 8,
            heads: 2,
            ff_inner: 8,
            picker_widths: vec![8, 3],
            ..ModelConfig::toy(12, 3)
        };
        let p = init_parameters(&cfg).unwrap();
        let bytes = to_bytes(&p, Some(42)).unwrap();
        let (back, manifest) = from_bytes(&bytes).unwrap();
        assert_eq!(manifest.vocab_fingerprint.as_deref(), Some("000000000000002a"));
        assert_eq!(back.config, p.config);
        for (a, b) in p.values.iter().zip(&back.values) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
        // a second save of the loaded parameters is byte-identical
        assert_eq!(to_bytes(&back, Some(42)).unwrap(), bytes);
        assert!(check_vocab(&manifest, 42, 12).is_ok());
        assert!(check_vocab(&manifest, 43, 12).is_err());
        assert!(check_vocab(&manifest, 42, 13).is_err());
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let cfg = ModelConfig {
            d_model: 8,
            heads: 2,
            ff_inner: 8,
            picker_widths: vec![8, 3],
            ..ModelConfig::toy(12, 3)
        };
        let bytes = to_bytes(&init_parameters(&cfg).unwrap(), None).unwrap();
        assert!(from_bytes(&bytes[..bytes.len() - 4]).is_err());
        assert!(from_bytes(b"not a checkpoint").is_err());
    }
}
