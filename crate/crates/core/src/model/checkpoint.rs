//! Versioned binary weight container.
//!
//! ```text
//! magic      8 bytes  "BCDMCKPT"
//! version    u32 LE
//! header     u32 LE length + UTF-8 JSON {"config": ..., "metadata": ...}
//! count      u32 LE number of arrays
//! array      u32 LE name length, name, u8 dtype (0 = f32, 1 = f64),
//!            u8 rank, rank × u32 LE dims, little-endian values
//! ```
//!
//! Arrays are named `params/<name>` and, when present, `ema/<name>`.

use std::io::{Cursor, Read, Write};
use std::path::Path;

use bcdm_nn::{DType, ParamSpec, ParamStore, Real};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ScoreModel, ScoreModelConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"BCDMCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Weights, optional EMA shadow and free-form run metadata.
#[derive(Debug, Clone)]
pub struct Checkpoint<T: Real> {
    pub config: ScoreModelConfig,
    pub params: ParamStore<T>,
    pub ema: Option<ParamStore<T>>,
    pub metadata: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ScoreModelConfig,
    metadata: serde_json::Value,
}

impl<T: Real> Checkpoint<T> {
    /// The model used for sampling: EMA weights when present.
    pub fn sampling_model(&self) -> Result<ScoreModel<T>> {
        let params = self.ema.clone().unwrap_or_else(|| self.params.clone());
        ScoreModel::from_params(self.config.clone(), params)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.write_u32::<LittleEndian>(CHECKPOINT_VERSION).map_err(io)?;
        let header = serde_json::to_vec(&Header {
            config: self.config.clone(),
            metadata: self.metadata.clone(),
        })?;
        out.write_u32::<LittleEndian>(len_u32(header.len())?).map_err(io)?;
        out.extend_from_slice(&header);
        let mut stores = vec![("params", &self.params)];
        if let Some(ema) = &self.ema {
            stores.push(("ema", ema));
        }
        let count: usize = stores.iter().map(|(_, s)| s.len()).sum();
        out.write_u32::<LittleEndian>(len_u32(count)?).map_err(io)?;
        for (prefix, store) in stores {
            for id in store.ids() {
                let spec = store.spec(id);
                let name = format!("{prefix}/{}", spec.name);
                out.write_u32::<LittleEndian>(len_u32(name.len())?).map_err(io)?;
                out.extend_from_slice(name.as_bytes());
                out.write_u8(T::DTYPE.code()).map_err(io)?;
                out.write_u8(spec.dims.len() as u8).map_err(io)?;
                for &d in &spec.dims {
                    out.write_u32::<LittleEndian>(len_u32(d)?).map_err(io)?;
                }
                for &v in store.get(id) {
                    match T::DTYPE {
                        DType::F32 => out.write_f32::<LittleEndian>(v.as_f64() as f32),
                        DType::F64 => out.write_f64::<LittleEndian>(v.as_f64()),
                    }
                    .map_err(io)?;
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        let version = r.read_u32::<LittleEndian>().map_err(io)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {version}, this build reads {CHECKPOINT_VERSION}"
            )));
        }
        let header_len = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let mut header = vec![0u8; header_len];
        r.read_exact(&mut header).map_err(io)?;
        let header: Header = serde_json::from_slice(&header)?;
        header.config.validate()?;

        let count = r.read_u32::<LittleEndian>().map_err(io)?;
        let mut params = ParamStore::new();
        let mut ema = ParamStore::new();
        for _ in 0..count {
            let name_len = r.read_u32::<LittleEndian>().map_err(io)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name).map_err(io)?;
            let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("array name is not UTF-8".into()))?;
            let dtype = DType::from_code(r.read_u8().map_err(io)?)
                .ok_or_else(|| Error::Checkpoint(format!("{name}: unknown dtype")))?;
            let rank = r.read_u8().map_err(io)? as usize;
            let dims = (0..rank)
                .map(|_| r.read_u32::<LittleEndian>().map(|d| d as usize))
                .collect::<std::io::Result<Vec<_>>>()
                .map_err(io)?;
            let numel: usize = dims.iter().product();
            let remaining = bytes.len() - r.position() as usize;
            if numel * dtype.size_of() > remaining {
                return Err(Error::Checkpoint(format!("{name}: truncated data")));
            }
            let values = (0..numel)
                .map(|_| match dtype {
                    DType::F32 => r.read_f32::<LittleEndian>().map(|v| T::lit(f64::from(v))),
                    DType::F64 => r.read_f64::<LittleEndian>().map(T::lit),
                })
                .collect::<std::io::Result<Vec<T>>>()
                .map_err(io)?;
            let (store, base) = if let Some(rest) = name.strip_prefix("params/") {
                (&mut params, rest)
            } else if let Some(rest) = name.strip_prefix("ema/") {
                (&mut ema, rest)
            } else {
                return Err(Error::Checkpoint(format!("unexpected array `{name}`")));
            };
            store.insert(ParamSpec::new(base, &dims), values)?;
        }
        if (r.position() as usize) != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes after the last array".into()));
        }
        // Validates names and shapes against the configuration.
        ScoreModel::from_params(header.config.clone(), params.clone())?;
        let ema = if ema.is_empty() {
            None
        } else {
            ScoreModel::from_params(header.config.clone(), ema.clone())?;
            Some(ema)
        };
        Ok(Self {
            config: header.config,
            params,
            ema,
            metadata: header.metadata,
        })
    }
}

fn io(e: std::io::Error) -> Error {
    Error::Checkpoint(e.to_string())
}

fn len_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Checkpoint(format!("length {n} exceeds u32")))
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes a checkpoint and returns the SHA-256 of the file contents.
pub fn save_checkpoint<T: Real>(path: impl AsRef<Path>, ckpt: &Checkpoint<T>) -> Result<String> {
    let path = path.as_ref();
    let bytes = ckpt.to_bytes()?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Reads a checkpoint (converting to `T`) and returns it with its SHA-256.
pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<(Checkpoint<T>, String)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok((Checkpoint::from_bytes(&bytes)?, sha256_hex(&bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelSize, Strategy};
    use crate::rng::seeded;

    #[test]
    fn round_trip_preserves_everything() {
        let cfg = ScoreModelConfig::preset(Strategy::Dc, ModelSize::Toy);
        let model: ScoreModel<f32> = ScoreModel::build(cfg.clone(), &mut seeded(1)).unwrap();
        let ckpt = Checkpoint {
            config: cfg,
            params: model.params().clone(),
            ema: Some(model.params().clone()),
            metadata: serde_json::json!({"step": 7}),
        };
        let bytes = ckpt.to_bytes().unwrap();
        let back = Checkpoint::<f32>::from_bytes(&bytes).unwrap();
        assert_eq!(back.params, ckpt.params);
        assert_eq!(back.ema, ckpt.ema);
        assert_eq!(back.metadata["step"], 7);
        assert_eq!(back.to_bytes().unwrap(), bytes);

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let hash = save_checkpoint(&p, &ckpt).unwrap();
        assert_eq!(hash.len(), 64);
        let (loaded, hash2) = load_checkpoint::<f64>(&p).unwrap();
        assert_eq!(hash, hash2);
        assert_eq!(loaded.params.cast::<f32>(), ckpt.params);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let cfg = ScoreModelConfig::preset(Strategy::Ic, ModelSize::Toy);
        let model: ScoreModel<f32> = ScoreModel::build(cfg.clone(), &mut seeded(1)).unwrap();
        let ckpt = Checkpoint {
            config: cfg,
            params: model.params().clone(),
            ema: None,
            metadata: serde_json::Value::Null,
        };
        let bytes = ckpt.to_bytes().unwrap();
        assert!(Checkpoint::<f32>::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::<f32>::from_bytes(&bad).is_err());
        let mut bad = bytes;
        bad[8] = 9;
        assert!(matches!(Checkpoint::<f32>::from_bytes(&bad), Err(Error::Checkpoint(_))));
    }
}
