use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::layers::EncoderConfig;
use crate::params::ParamStore;
use crate::tensor::Tensor;
use crate::NeuralError;

pub const MAGIC: &[u8; 8] = b"TILTCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: String,
    pub shape: [usize; 2],
    /// Byte offset into the payload.
    pub offset: usize,
    pub frozen: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: EncoderConfig,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
    payload_bytes: usize,
    payload_sha256: String,
}

/// Encoder configuration, free-form metadata and every parameter.
///
/// Layout: 8-byte magic, little-endian u64 header length, JSON header, then
/// the raw little-endian f32 payload.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: EncoderConfig,
    pub meta: serde_json::Value,
    pub params: ParamStore<f32>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut payload = Vec::with_capacity(self.params.total_count() * 4);
        let mut tensors = Vec::with_capacity(self.params.len());
        for (_, p) in self.params.iter() {
            tensors.push(TensorEntry {
                name: p.name.clone(),
                dtype: "f32".into(),
                shape: p.value.shape(),
                offset: payload.len(),
                frozen: p.frozen,
            });
            for x in p.value.data() {
                payload.extend_from_slice(&x.to_le_bytes());
            }
        }
        let header = Header {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            meta: self.meta.clone(),
            tensors,
            payload_bytes: payload.len(),
            payload_sha256: hex::encode(Sha256::digest(&payload)),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NeuralError> {
        let bad = |m: &str| NeuralError::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = &bytes[16..];
        if body.len() < hlen {
            return Err(NeuralError::ChecksumMismatch);
        }
        let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| bad(&format!("header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(NeuralError::VersionMismatch {
                found: header.format_version,
                expected: FORMAT_VERSION,
            });
        }
        let payload = &body[hlen..];
        if hex::encode(Sha256::digest(payload)) != header.payload_sha256 || payload.len() != header.payload_bytes {
            return Err(NeuralError::ChecksumMismatch);
        }
        let mut params = ParamStore::new();
        for t in &header.tensors {
            if t.dtype != "f32" {
                return Err(bad(&format!("unsupported dtype {}", t.dtype)));
            }
            let n = t.shape[0] * t.shape[1];
            let end = t.offset + 4 * n;
            let raw = payload.get(t.offset..end).ok_or_else(|| bad("tensor outside payload"))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let id = params.add(t.name.clone(), Tensor::from_vec(t.shape[0], t.shape[1], data));
            params.set_frozen(id, t.frozen);
        }
        Ok(Self {
            config: header.config,
            meta: header.meta,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NeuralError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NeuralError> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Copies the parameters under `prefix` into `store`, which must hold
    /// identically named and shaped tensors.
    pub fn restore_into(&self, store: &mut ParamStore<f32>, prefix: &str) -> Result<(), NeuralError> {
        for (_, p) in self.params.iter().filter(|(_, p)| p.name.starts_with(prefix)) {
            let id = store
                .find(&p.name)
                .ok_or_else(|| NeuralError::Checkpoint(format!("model has no parameter '{}'", p.name)))?;
            if store.value(id).shape() != p.value.shape() {
                return Err(NeuralError::ShapeMismatch {
                    what: p.name.clone(),
                    expected: store.value(id).shape().to_vec(),
                    found: p.value.shape().to_vec(),
                });
            }
            store.set_value(id, (*p.value).clone());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::LanguageModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> Checkpoint {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = EncoderConfig::desk_transformer();
        LanguageModel::new(&cfg, 50, &mut store, &mut rng).unwrap();
        Checkpoint {
            config: cfg,
            meta: serde_json::json!({"objective": "clm"}),
            params: store,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = model();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back.config, ck.config);
        assert_eq!(back.meta, ck.meta);
        for ((_, a), (_, b)) in ck.params.iter().zip(back.params.iter()) {
            assert_eq!(a.name, b.name);
            let bits = |t: &Tensor<f32>| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.value), bits(&b.value));
        }
    }

    #[test]
    fn truncation_fails_checksum() {
        let bytes = model().to_bytes();
        let cut = &bytes[..bytes.len() - 7];
        assert!(matches!(Checkpoint::from_bytes(cut), Err(NeuralError::ChecksumMismatch)));
        let mut flipped = bytes.clone();
        *flipped.last_mut().unwrap() ^= 1;
        assert!(matches!(Checkpoint::from_bytes(&flipped), Err(NeuralError::ChecksumMismatch)));
    }

    #[test]
    fn version_is_checked() {
        let bytes = model().to_bytes();
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header = String::from_utf8(bytes[16..16 + hlen].to_vec()).unwrap();
        let bumped = header.replacen("\"format_version\":1", "\"format_version\":9", 1);
        let mut out = bytes[..8].to_vec();
        out.extend_from_slice(&(bumped.len() as u64).to_le_bytes());
        out.extend_from_slice(bumped.as_bytes());
        out.extend_from_slice(&bytes[16 + hlen..]);
        assert!(matches!(
            Checkpoint::from_bytes(&out),
            Err(NeuralError::VersionMismatch { found: 9, .. })
        ));
    }

    #[test]
    fn restore_rejects_shape_mismatch() {
        let ck = model();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = EncoderConfig {
            ff_size: 96,
            ..EncoderConfig::desk_transformer()
        };
        LanguageModel::new(&cfg, 50, &mut store, &mut rng).unwrap();
        assert!(matches!(
            ck.restore_into(&mut store, "encoder."),
            Err(NeuralError::ShapeMismatch { .. })
        ));
    }
}
