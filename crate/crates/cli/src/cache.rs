//! Binary feature caches, one file per (image, descriptor) pair.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "STIMF1"
//! u32 id length, id bytes (UTF-8)
//! u64 dimension, u64 count
//! count * dimension f32        row-major descriptor payload
//! count * (u32 x, u32 y, u32 scale)
//! ```

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use vistim_core::DescriptorSet;

pub const MAGIC: &[u8; 6] = b"STIMF1";
pub const EXTENSION: &str = "stimf";

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub id: String,
    pub set: DescriptorSet,
}

pub fn encode(id: &str, set: &DescriptorSet) -> Vec<u8> {
    let n = set.len();
    let d = set.dimension();
    let mut out = Vec::with_capacity(6 + 4 + id.len() + 16 + n * d * 4 + n * 12);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(id.len() as u32).to_le_bytes());
    out.extend_from_slice(id.as_bytes());
    out.extend_from_slice(&(d as u64).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for v in set.vectors() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for (&(x, y), &s) in set.positions().iter().zip(set.scale_index()) {
        out.extend_from_slice(&x.to_le_bytes());
        out.extend_from_slice(&y.to_le_bytes());
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or("truncated file")?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<CacheEntry, String> {
    let mut c = Cursor { bytes, at: 0 };
    if c.take(MAGIC.len())? != MAGIC {
        return Err("bad magic".into());
    }
    let id_len = c.u32()? as usize;
    let id = std::str::from_utf8(c.take(id_len)?)
        .map_err(|_| "descriptor id is not UTF-8")?
        .to_string();
    let d = usize::try_from(c.u64()?).map_err(|_| "dimension overflow")?;
    let n = usize::try_from(c.u64()?).map_err(|_| "count overflow")?;
    let payload = n.checked_mul(d).and_then(|v| v.checked_mul(4)).ok_or("payload size overflow")?;
    let tail = n.checked_mul(12).ok_or("position block overflow")?;
    if bytes.len() - c.at != payload + tail {
        return Err(format!(
            "expected {} payload bytes for {n} x {d}, found {}",
            payload + tail,
            bytes.len() - c.at
        ));
    }
    let vectors = c
        .take(payload)?
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let mut positions = Vec::with_capacity(n);
    let mut scales = Vec::with_capacity(n);
    for _ in 0..n {
        positions.push((c.u32()?, c.u32()?));
        scales.push(c.u32()?);
    }
    let set = if n == 0 {
        DescriptorSet::empty(d)
    } else {
        DescriptorSet::new(d, vectors, positions, scales).map_err(|e| e.to_string())?
    };
    Ok(CacheEntry { id, set })
}

/// Content hash naming the cache file of one image under one descriptor and
/// preprocessing setting.
pub fn content_key(image: &[u8], mask: &[u8], descriptor_key: &str) -> String {
    let mut h = Sha256::new();
    for part in [image, mask, descriptor_key.as_bytes()] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    hex::encode(h.finalize())
}

pub fn cache_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("{key}.{EXTENSION}"))
}

pub fn read(path: &Path) -> Result<CacheEntry, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    decode(&bytes).map_err(|e| format!("{}: {e}", path.display()))
}

/// Writes through a temporary file so a crash never leaves a partial cache.
pub fn write(path: &Path, id: &str, set: &DescriptorSet) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension(format!("{EXTENSION}.tmp"));
    std::fs::write(&tmp, encode(id, set))?;
    std::fs::rename(&tmp, path)
}
