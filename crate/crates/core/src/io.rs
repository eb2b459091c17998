//! Binary container shared by checkpoints and masks, plus atomic file writes.
//!
//! Layout: 8 magic bytes, a little-endian `u32` header length, a UTF-8 JSON
//! header, then raw little-endian `f32` blobs in header order.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{LanError, Result};

pub fn encode_container(magic: &[u8; 8], header: &[u8], blobs: &[&[f32]]) -> Vec<u8> {
    let floats: usize = blobs.iter().map(|b| b.len()).sum();
    let mut out = Vec::with_capacity(12 + header.len() + 4 * floats);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header);
    for blob in blobs {
        for v in *blob {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Splits a container into its JSON header and the float payload.
pub fn decode_container<'a>(
    bytes: &'a [u8],
    magic: &[u8; 8],
    origin: &str,
) -> Result<(&'a [u8], Vec<f32>)> {
    if bytes.len() < 8 || &bytes[..8] != magic {
        return Err(LanError::format(
            origin,
            0,
            format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&bytes[..bytes.len().min(8)]),
                String::from_utf8_lossy(magic)
            ),
        ));
    }
    if bytes.len() < 12 {
        return Err(LanError::format(origin, bytes.len() as u64, "truncated header"));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = 12 + len;
    if bytes.len() < body {
        return Err(LanError::format(origin, 12, format!("header length {len} exceeds file")));
    }
    let payload = &bytes[body..];
    if payload.len() % 4 != 0 {
        return Err(LanError::format(
            origin,
            body as u64,
            "payload is not a whole number of f32 values",
        ));
    }
    let floats = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok((&bytes[12..body], floats))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| LanError::io(path, e))
}

/// Writes `bytes` to a temporary sibling of `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| LanError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| LanError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| LanError::io(path, e))?;
    tmp.persist(path).map_err(|e| LanError::io(path, e.error))?;
    Ok(())
}
