//! Binary checkpoint: a fixed little-endian header followed by the flat
//! parameter vector.
//!
//! ```text
//! magic "DSKRLCKP" | format u32 | dtype bytes u32 | alphabet u32 | hidden u32
//! | window u32 | prompt_dim u32 | step u64 | config hash u64 | count u64 | values
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::policy::{PolicyParams, PolicyShape};
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"DSKRLCKP";
const FORMAT: u32 = 1;
const HEADER_LEN: usize = 8 + 4 * 6 + 8 * 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub step: u64,
    pub config_hash: u64,
}

/// First eight bytes of the SHA-256 of `text`, little-endian.
pub fn config_hash(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("32-byte digest"))
}

pub fn encode<T: Scalar>(params: &PolicyParams<T>, meta: CheckpointMeta) -> Vec<u8> {
    let s = params.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + params.len() * T::BYTES);
    out.extend_from_slice(MAGIC);
    for v in [FORMAT, T::BYTES as u32, s.alphabet as u32, s.hidden as u32, s.window as u32, s.prompt_dim as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in [meta.step, meta.config_hash, params.len() as u64] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &x in params.as_slice() {
        x.write_le(&mut out);
    }
    out
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<(PolicyParams<T>, CheckpointMeta)> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(corrupt("not a checkpoint file"));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().expect("4 bytes"));
    let u64_at = |i: usize| u64::from_le_bytes(bytes[32 + 8 * i..40 + 8 * i].try_into().expect("8 bytes"));
    if u32_at(0) != FORMAT {
        return Err(corrupt(format!("unsupported format version {}", u32_at(0))));
    }
    if u32_at(1) as usize != T::BYTES {
        return Err(corrupt(format!("stored values are {} bytes wide, expected {}", u32_at(1), T::BYTES)));
    }
    let shape = PolicyShape::new(u32_at(2) as usize, u32_at(3) as usize, u32_at(4) as usize, u32_at(5) as usize)
        .map_err(|e| corrupt(format!("bad shape: {e}")))?;
    let meta = CheckpointMeta { step: u64_at(0), config_hash: u64_at(1) };
    let count = u64_at(2) as usize;
    if count != shape.param_count() {
        return Err(corrupt(format!("parameter count {count} does not match shape ({})", shape.param_count())));
    }
    let body = &bytes[HEADER_LEN..];
    if body.len() != count * T::BYTES {
        return Err(corrupt(format!("expected {} value bytes, found {}", count * T::BYTES, body.len())));
    }
    let data = body.chunks_exact(T::BYTES).map(T::read_le).collect();
    Ok((PolicyParams::from_flat(shape, data)?, meta))
}

pub fn save<T: Scalar>(path: &Path, params: &PolicyParams<T>, meta: CheckpointMeta) -> Result<()> {
    std::fs::write(path, encode(params, meta))?;
    Ok(())
}

pub fn load<T: Scalar>(path: &Path) -> Result<(PolicyParams<T>, CheckpointMeta)> {
    decode(&std::fs::read(path)?)
}
