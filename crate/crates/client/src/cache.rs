//! Content-addressed on-disk embedding cache.
//!
//! Layout: `{root}/{first two hex digits}/{sha256(model NUL text)}.emb`.
//! Each file holds a 16-byte header (magic, format version, dimension) and
//! the vector as little-endian `f64`s, so a hit is bit-identical to what was
//! stored. Unreadable or malformed files are treated as misses.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use sha2::{Digest, Sha256};
use thiserror::Error;

const MAGIC: &[u8; 4] = b"FSEM";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Hex SHA-256 of `model`, a NUL byte, and `text`.
pub fn cache_key(model: &str, text: &str) -> String {
    let mut h = Sha256::new();
    h.update(model.as_bytes());
    h.update([0u8]);
    h.update(text.as_bytes());
    hex::encode(h.finalize())
}

pub fn encode_vector(v: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * v.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

/// `None` for anything that is not a complete, well-formed entry.
pub fn decode_vector(bytes: &[u8]) -> Option<Vec<f64>> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return None;
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().ok()?);
    let dim = u64::from_le_bytes(bytes[8..16].try_into().ok()?);
    let body = &bytes[HEADER_LEN..];
    if version != VERSION || dim == 0 || (body.len() as u64) != dim.checked_mul(8)? {
        return None;
    }
    Some(
        body.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect(),
    )
}

#[derive(Debug)]
pub struct EmbeddingCache {
    root: PathBuf,
    write_lock: Mutex<()>,
}

impl EmbeddingCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            write_lock: Mutex::new(()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, model: &str, text: &str) -> PathBuf {
        let key = cache_key(model, text);
        self.root.join(&key[..2]).join(format!("{key}.emb"))
    }

    pub fn get(&self, model: &str, text: &str) -> Option<Vec<f64>> {
        let bytes = fs::read(self.path_for(model, text)).ok()?;
        decode_vector(&bytes)
    }

    /// Writes through a temporary file and a rename, so concurrent readers
    /// never observe a half-written entry.
    pub fn put(&self, model: &str, text: &str, vector: &[f64]) -> Result<(), CacheError> {
        let path = self.path_for(model, text);
        let dir = path.parent().expect("cache path has a parent");
        let io_err = |source| CacheError::Io {
            path: path.clone(),
            source,
        };
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        fs::create_dir_all(dir).map_err(io_err)?;
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let mut file = fs::File::create(&tmp).map_err(io_err)?;
        file.write_all(&encode_vector(vector)).map_err(io_err)?;
        file.sync_all().map_err(io_err)?;
        drop(file);
        fs::rename(&tmp, &path).map_err(io_err)
    }
}
