//! Binary checkpoint format for [`LinearHead`].
//!
//! All integers and reals are little-endian:
//!
//! | offset | size      | field                                   |
//! |--------|-----------|-----------------------------------------|
//! | 0      | 4         | magic `GBHD`                            |
//! | 4      | 2         | version (u16, currently 1)              |
//! | 6      | 4         | feature dimension D (u32)               |
//! | 10     | 4         | class count C (u32)                     |
//! | 14     | 8         | training seed (u64)                     |
//! | 22     | 32        | run config hash (SHA-256)               |
//! | 54     | 32        | task/extractor compatibility hash       |
//! | 86     | 8·C·D     | W, row-major f64                        |
//! | ..     | 8·C       | b, f64                                  |
//! | ..     | 4         | CRC32 of every preceding byte           |

use std::path::Path;

use super::{LinearHead, Result, TrainError};

pub const MAGIC: &[u8; 4] = b"GBHD";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 86;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub config_hash: [u8; 32],
    pub compat_hash: [u8; 32],
}

pub fn encode_checkpoint(head: &LinearHead, meta: &CheckpointMeta) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * head.params().len() + 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(head.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(head.classes() as u32).to_le_bytes());
    buf.extend_from_slice(&meta.seed.to_le_bytes());
    buf.extend_from_slice(&meta.config_hash);
    buf.extend_from_slice(&meta.compat_hash);
    for v in head.params() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

fn corrupt(msg: impl Into<String>) -> TrainError {
    TrainError::CorruptCheckpoint(msg.into())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(LinearHead, CheckpointMeta)> {
    if bytes.len() < HEADER_LEN + 4 {
        return Err(corrupt(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let dim = u32_at(6) as usize;
    let classes = u32_at(10) as usize;
    let n = classes
        .checked_mul(dim)
        .and_then(|cd| cd.checked_add(classes))
        .ok_or_else(|| corrupt("dimension overflow"))?;
    let expected = n
        .checked_mul(8)
        .and_then(|b| b.checked_add(HEADER_LEN + 4))
        .ok_or_else(|| corrupt("dimension overflow"))?;
    if bytes.len() != expected {
        return Err(corrupt(format!(
            "length {} does not match header (expected {expected})",
            bytes.len()
        )));
    }
    let body = &bytes[..expected - 4];
    let stored = u32_at(expected - 4);
    if crc32fast::hash(body) != stored {
        return Err(corrupt("checksum mismatch"));
    }
    let mut meta = CheckpointMeta {
        seed: u64::from_le_bytes(bytes[14..22].try_into().unwrap()),
        ..Default::default()
    };
    meta.config_hash.copy_from_slice(&bytes[22..54]);
    meta.compat_hash.copy_from_slice(&bytes[54..86]);
    let params: Vec<f64> = body[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let bias = params[classes * dim..].to_vec();
    let mut weights = params;
    weights.truncate(classes * dim);
    let head = LinearHead::from_parts(classes, dim, weights, bias).map_err(|e| corrupt(e.to_string()))?;
    Ok((head, meta))
}

pub fn save_checkpoint(path: impl AsRef<Path>, head: &LinearHead, meta: &CheckpointMeta) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(head, meta)).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(LinearHead, CheckpointMeta)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
    decode_checkpoint(&bytes)
}
