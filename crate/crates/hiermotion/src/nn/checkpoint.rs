//! Versioned checkpoint container: a JSON header describing the parameters
//! plus a little-endian float payload.
//!
//! Layout: magic `HMCK`, u32 version, u64 header length, header JSON,
//! payload. The header records the dtype, a model-specific config document,
//! and the parameter names/shapes in payload order.

use super::layers::ParamStore;
use super::{NnError, Scalar};
use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"HMCK";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    dtype: String,
    config: serde_json::Value,
    params: Vec<ParamMeta>,
}

#[derive(Serialize, Deserialize)]
struct ParamMeta {
    name: String,
    shape: Vec<usize>,
    trainable: bool,
}

pub fn save_checkpoint<F: Scalar>(
    path: &Path,
    params: &ParamStore<F>,
    config: &serde_json::Value,
) -> Result<(), NnError> {
    let header = Header {
        version: VERSION,
        dtype: F::DTYPE.to_string(),
        config: config.clone(),
        params: params
            .iter()
            .map(|(name, entry)| ParamMeta {
                name: name.clone(),
                shape: entry.value.shape().to_vec(),
                trainable: entry.trainable,
            })
            .collect(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(MAGIC)?;
    file.write_all(&VERSION.to_le_bytes())?;
    file.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    file.write_all(&header_bytes)?;
    for (_, entry) in params.iter() {
        for v in entry.value.iter() {
            file.write_all(&v.to_le_bytes_vec())?;
        }
    }
    Ok(())
}

pub fn load_checkpoint<F: Scalar>(
    path: &Path,
) -> Result<(ParamStore<F>, serde_json::Value), NnError> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::BadMagic);
    }
    let mut v4 = [0u8; 4];
    file.read_exact(&mut v4)?;
    let version = u32::from_le_bytes(v4);
    if version != VERSION {
        return Err(NnError::BadVersion(version));
    }
    let mut l8 = [0u8; 8];
    file.read_exact(&mut l8)?;
    let header_len = u64::from_le_bytes(l8) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)?;
    if header.dtype != F::DTYPE {
        return Err(NnError::DtypeMismatch {
            expected: F::DTYPE.to_string(),
            got: header.dtype,
        });
    }
    let mut params = ParamStore::new();
    let mut buf = vec![0u8; F::WIDTH];
    for meta in header.params {
        let len: usize = meta.shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            file.read_exact(&mut buf)?;
            data.push(F::from_le_slice(&buf));
        }
        let arr = ArrayD::from_shape_vec(IxDyn(&meta.shape), data)
            .map_err(|_| NnError::ShapeMismatch(format!("checkpoint param {}", meta.name)))?;
        params.insert(&meta.name, arr, meta.trainable);
    }
    Ok((params, header.config))
}
