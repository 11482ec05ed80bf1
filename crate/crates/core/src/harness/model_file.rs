//! `DPRN` model files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "DPRN"  u32 version = 1  u32 header_len  header_len bytes of JSON
//! param_count f32 in flattened-parameter order
//! ```
//!
//! The JSON header holds the layer specs (dimensions, activation kinds and
//! ties) and the parameter count.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{LayerSpec, NetworkParams};

const MAGIC: &[u8; 4] = b"DPRN";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    layers: Vec<LayerSpec>,
    param_count: usize,
}

/// Parameters are stored in single precision.
pub fn model_to_bytes(params: &NetworkParams) -> Vec<u8> {
    let header = serde_json::to_vec(&Header {
        layers: params.specs(),
        param_count: params.param_count(),
    })
    .expect("header serialises");
    let mut out = Vec::with_capacity(12 + header.len() + params.param_count() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for v in params.flatten() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<NetworkParams> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format("not a DPRN model (bad magic)".into()));
    }
    if bytes.len() < 12 {
        return Err(Error::Truncated {
            expected: 12,
            actual: bytes.len(),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported DPRN version {version}")));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload_at = 12 + header_len;
    if bytes.len() < payload_at {
        return Err(Error::Truncated {
            expected: payload_at,
            actual: bytes.len(),
        });
    }
    let header: Header = serde_json::from_slice(&bytes[12..payload_at])
        .map_err(|e| Error::Format(format!("invalid model header: {e}")))?;
    let mut params = NetworkParams::init(&header.layers, 0)
        .map_err(|e| Error::Format(format!("invalid model structure: {e}")))?;
    if params.param_count() != header.param_count {
        return Err(Error::Format(format!(
            "header declares {} parameters but its layers hold {}",
            header.param_count,
            params.param_count()
        )));
    }
    let expected = payload_at + header.param_count * 4;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after the parameter payload",
            bytes.len() - expected
        )));
    }
    let mut flat = Vec::with_capacity(header.param_count);
    for (i, c) in bytes[payload_at..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(c.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Format(format!("non-finite parameter at index {i}")));
        }
        flat.push(v as f64);
    }
    params.assign_flat(&flat)?;
    Ok(params)
}

pub fn save_model(params: &NetworkParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_bytes(params)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<NetworkParams> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}
