//! Weights file: one JSON manifest line, then little-endian `f64` data in
//! manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FastTab, ModelConfig};
use crate::numerics::{ParamStore, Tensor};

pub const FORMAT_VERSION: u32 = 1;
const DTYPE: &str = "f64";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the data blob.
    pub offset: usize,
    pub dtype: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
}

pub fn encode_weights(model: &FastTab) -> Result<Vec<u8>> {
    let mut tensors = Vec::with_capacity(model.params.len());
    let mut offset = 0;
    for (name, t) in model.params.iter() {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset,
            dtype: DTYPE.into(),
        });
        offset += t.numel() * 8;
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: model.cfg.clone(),
        tensors,
    };
    let mut out = serde_json::to_vec(&manifest)?;
    out.push(b'\n');
    out.reserve(offset);
    for t in model.params.tensors() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_weights(bytes: &[u8]) -> Result<FastTab> {
    let bad = |m: String| Error::Input(format!("weights file: {m}"));
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing manifest line".into()))?;
    let manifest: Manifest = serde_json::from_slice(&bytes[..nl])?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {}", manifest.format_version)));
    }
    let blob = &bytes[nl + 1..];
    let mut store = ParamStore::new();
    let mut expected = 0;
    for e in &manifest.tensors {
        if e.dtype != DTYPE {
            return Err(bad(format!("tensor {} has dtype {}", e.name, e.dtype)));
        }
        if e.offset != expected {
            return Err(bad(format!("tensor {} at offset {}, expected {expected}", e.name, e.offset)));
        }
        let n: usize = e.shape.iter().product();
        let raw = blob
            .get(e.offset..e.offset + 8 * n)
            .ok_or_else(|| bad(format!("tensor {} runs past the end of the data", e.name)))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunks of 8")))
            .collect();
        store.add(e.name.clone(), Tensor::new(e.shape.clone(), data)?);
        expected += 8 * n;
    }
    if blob.len() != expected {
        return Err(bad(format!("{} data bytes, manifest describes {expected}", blob.len())));
    }
    FastTab::from_params(manifest.config, store)
}

pub fn save_weights(path: &Path, model: &FastTab) -> Result<()> {
    fs::write(path, encode_weights(model)?)?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<FastTab> {
    decode_weights(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let m = FastTab::new(ModelConfig::tiny(), 11).unwrap();
        let bytes = encode_weights(&m).unwrap();
        let back = decode_weights(&bytes).unwrap();
        assert_eq!(back.cfg, m.cfg);
        for ((na, a), (nb, b)) in m.params.iter().zip(back.params.iter()) {
            assert_eq!(na, nb);
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(encode_weights(&back).unwrap(), bytes);
    }

    #[test]
    fn truncated_blob_rejected() {
        let m = FastTab::new(ModelConfig::tiny(), 1).unwrap();
        let bytes = encode_weights(&m).unwrap();
        assert!(decode_weights(&bytes[..bytes.len() - 8]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_weights(&extra).is_err());
    }
}
