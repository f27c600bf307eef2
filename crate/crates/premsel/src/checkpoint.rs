//! Checkpoint container: a versioned header, a configuration snapshot, then
//! the named parameters as little-endian 32-bit float payloads.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes   "PREMSEL\0"
//! version      u32       currently 1
//! config_len   u64       followed by that many bytes of UTF-8 JSON
//! param_count  u64
//! per parameter:
//!   name_len   u64       followed by that many bytes of UTF-8
//!   rank       u64
//!   dims       u64 × rank
//!   payload    f32 × Π dims
//! ```
//!
//! Saving is fully deterministic: parameters are written in the model's
//! canonical order and the snapshot is the serialized run configuration, so
//! identical runs produce byte-identical files.

use std::io::{Read, Write};
use std::path::Path;

use crate::model::PremiseModel;
use crate::tensor::{Scalar, Tensor};

pub const MAGIC: &[u8; 8] = b"PREMSEL\0";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path} is not a checkpoint (bad magic)")]
    BadMagic { path: String },
    #[error("unsupported checkpoint version {found} (this build reads {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint is truncated or corrupt: {detail}")]
    Corrupt { detail: String },
    #[error("checkpoint does not match the model: {detail}")]
    Mismatch { detail: String },
}

pub struct LoadedCheckpoint {
    pub config_json: String,
    pub params: Vec<(String, Vec<usize>, Vec<f32>)>,
}

pub fn save<E: Scalar>(
    path: &Path,
    config_json: &str,
    params: &[(String, Tensor<E>)],
) -> Result<(), CheckpointError> {
    let io_err = |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(config_json.len() as u64).to_le_bytes())
        .map_err(io_err)?;
    w.write_all(config_json.as_bytes()).map_err(io_err)?;
    w.write_all(&(params.len() as u64).to_le_bytes())
        .map_err(io_err)?;
    for (name, tensor) in params {
        w.write_all(&(name.len() as u64).to_le_bytes())
            .map_err(io_err)?;
        w.write_all(name.as_bytes()).map_err(io_err)?;
        w.write_all(&(tensor.rank() as u64).to_le_bytes())
            .map_err(io_err)?;
        for &d in tensor.dims() {
            w.write_all(&(d as u64).to_le_bytes()).map_err(io_err)?;
        }
        for v in tensor.data() {
            w.write_all(&(v.as_f64() as f32).to_le_bytes())
                .map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn load(path: &Path) -> Result<LoadedCheckpoint, CheckpointError> {
    let io_err = |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut r = std::io::BufReader::new(file);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic {
            path: path.display().to_string(),
        });
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(io_err)?;
    let version = u32::from_le_bytes(u32buf);
    if version != VERSION {
        return Err(CheckpointError::Version {
            found: version,
            expected: VERSION,
        });
    }
    let read_u64 = |r: &mut dyn Read| -> Result<u64, CheckpointError> {
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf)
            .map_err(|e| CheckpointError::Corrupt {
                detail: e.to_string(),
            })?;
        Ok(u64::from_le_bytes(buf))
    };
    let config_len = read_u64(&mut r)? as usize;
    let mut config = vec![0u8; config_len];
    r.read_exact(&mut config).map_err(io_err)?;
    let config_json = String::from_utf8(config).map_err(|e| CheckpointError::Corrupt {
        detail: format!("config snapshot is not UTF-8: {e}"),
    })?;

    let count = read_u64(&mut r)? as usize;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u64(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(io_err)?;
        let name = String::from_utf8(name).map_err(|e| CheckpointError::Corrupt {
            detail: format!("parameter name is not UTF-8: {e}"),
        })?;
        let rank = read_u64(&mut r)? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(read_u64(&mut r)? as usize);
        }
        let numel: usize = dims.iter().product();
        let mut payload = vec![0f32; numel];
        let mut bytes = vec![0u8; numel * 4];
        r.read_exact(&mut bytes).map_err(io_err)?;
        for (i, chunk) in bytes.chunks_exact(4).enumerate() {
            payload[i] = f32::from_le_bytes(chunk.try_into().expect("chunked by 4"));
        }
        params.push((name, dims, payload));
    }
    Ok(LoadedCheckpoint {
        config_json,
        params,
    })
}

/// Installs loaded parameters into a model, validating names and shapes.
pub fn load_into_model<E: Scalar>(
    model: &mut PremiseModel<E>,
    loaded: &LoadedCheckpoint,
) -> Result<(), CheckpointError> {
    let expected = model.parameters();
    if expected.len() != loaded.params.len() {
        return Err(CheckpointError::Mismatch {
            detail: format!(
                "model has {} parameters, checkpoint has {}",
                expected.len(),
                loaded.params.len()
            ),
        });
    }
    let mut fresh = Vec::with_capacity(expected.len());
    for ((name, tensor), (ck_name, ck_dims, payload)) in expected.iter().zip(&loaded.params) {
        if name != ck_name {
            return Err(CheckpointError::Mismatch {
                detail: format!("expected parameter `{name}`, found `{ck_name}`"),
            });
        }
        if tensor.dims() != ck_dims.as_slice() {
            return Err(CheckpointError::Mismatch {
                detail: format!(
                    "parameter `{name}` has shape {:?}, checkpoint has {:?}",
                    tensor.dims(),
                    ck_dims
                ),
            });
        }
        let data: Vec<E> = payload.iter().map(|&v| E::from_f64(v as f64)).collect();
        fresh.push(Tensor::param(ck_dims.clone(), data));
    }
    model
        .set_parameters(fresh)
        .map_err(|e| CheckpointError::Mismatch {
            detail: e.to_string(),
        })
}
