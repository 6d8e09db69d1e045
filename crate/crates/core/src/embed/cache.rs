//! Append-only binary vector store.
//!
//! Record layout (little-endian):
//! `u32 model_id_len | model_id utf-8 | [u8; 32] text_sha256 | u32 dim | f32 * dim`.
//! The in-memory index is rebuilt by scanning the file at open; a JSON sidecar
//! (`<file>.index.json`) listing every record's offset is rewritten on flush
//! for external readers.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::EmbedError;

pub const EMBED_CACHE_INDEX_SUFFIX: &str = ".index.json";

type Key = (String, [u8; 32]);

#[derive(Debug, Clone, Serialize)]
struct IndexEntry {
    model_id: String,
    text_sha256: String,
    dim: u32,
    offset: u64,
}

#[derive(Debug)]
struct Store {
    path: PathBuf,
    file: File,
    len: u64,
    index: Vec<IndexEntry>,
    dirty: bool,
}

#[derive(Debug, Default)]
pub struct EmbeddingCache {
    vectors: RwLock<HashMap<Key, Arc<Vec<f32>>>>,
    store: Option<Mutex<Store>>,
}

fn text_digest(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

fn encode_record(model_id: &str, digest: &[u8; 32], values: &[f32]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(8 + model_id.len() + 32 + 4 * values.len());
    buf.extend_from_slice(&(model_id.len() as u32).to_le_bytes());
    buf.extend_from_slice(model_id.as_bytes());
    buf.extend_from_slice(digest);
    buf.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

struct Decoded {
    model_id: String,
    digest: [u8; 32],
    values: Vec<f32>,
    size: usize,
}

/// Decode one record at the start of `bytes`; `None` if it is incomplete.
fn decode_record(bytes: &[u8]) -> Option<Result<Decoded, String>> {
    let take_u32 = |at: usize| -> Option<u32> { Some(u32::from_le_bytes(bytes.get(at..at + 4)?.try_into().ok()?)) };
    let model_len = take_u32(0)? as usize;
    let model_end = 4 + model_len;
    let model_bytes = bytes.get(4..model_end)?;
    let digest: [u8; 32] = bytes.get(model_end..model_end + 32)?.try_into().ok()?;
    let dim = take_u32(model_end + 32)? as usize;
    let data_start = model_end + 36;
    let data = bytes.get(data_start..data_start + 4 * dim)?;
    let model_id = match std::str::from_utf8(model_bytes) {
        Ok(s) => s.to_string(),
        Err(e) => return Some(Err(format!("model id is not utf-8: {e}"))),
    };
    let values = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    Some(Ok(Decoded {
        model_id,
        digest,
        values,
        size: data_start + 4 * dim,
    }))
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Open or create the cache file at `path`, rebuilding the index. A torn
    /// trailing record is truncated away.
    pub fn open(path: &Path) -> Result<Self, EmbedError> {
        let err = |message: String| EmbedError::Cache {
            path: path.display().to_string(),
            message,
        };
        let bytes = if path.exists() {
            fs::read(path).map_err(|e| err(e.to_string()))?
        } else {
            Vec::new()
        };
        let mut vectors = HashMap::new();
        let mut index = Vec::new();
        let mut offset = 0usize;
        while offset < bytes.len() {
            match decode_record(&bytes[offset..]) {
                None => break,
                Some(Err(m)) => return Err(err(format!("record at byte {offset}: {m}"))),
                Some(Ok(rec)) => {
                    index.push(IndexEntry {
                        model_id: rec.model_id.clone(),
                        text_sha256: hex::encode(rec.digest),
                        dim: rec.values.len() as u32,
                        offset: offset as u64,
                    });
                    vectors.insert((rec.model_id, rec.digest), Arc::new(rec.values));
                    offset += rec.size;
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| err(e.to_string()))?;
        if offset < bytes.len() {
            file.set_len(offset as u64).map_err(|e| err(e.to_string()))?;
        }
        let cache = EmbeddingCache {
            vectors: RwLock::new(vectors),
            store: Some(Mutex::new(Store {
                path: path.to_path_buf(),
                file,
                len: offset as u64,
                index,
                dirty: true,
            })),
        };
        cache.flush()?;
        Ok(cache)
    }

    /// Look up the stored vector for `(model_id, normalized text)`.
    pub fn get(&self, model_id: &str, text: &str) -> Option<Arc<Vec<f32>>> {
        self.vectors
            .read()
            .get(&(model_id.to_string(), text_digest(text)))
            .cloned()
    }

    pub fn insert(&self, model_id: &str, text: &str, values: &[f32]) -> Result<(), EmbedError> {
        let digest = text_digest(text);
        let key = (model_id.to_string(), digest);
        if let Some(store) = &self.store {
            let mut store = store.lock();
            if self.vectors.read().contains_key(&key) {
                return Ok(());
            }
            let record = encode_record(model_id, &digest, values);
            store.file.write_all(&record).map_err(|e| EmbedError::Cache {
                path: store.path.display().to_string(),
                message: e.to_string(),
            })?;
            let offset = store.len;
            store.len += record.len() as u64;
            store.index.push(IndexEntry {
                model_id: model_id.to_string(),
                text_sha256: hex::encode(digest),
                dim: values.len() as u32,
                offset,
            });
            store.dirty = true;
        }
        self.vectors
            .write()
            .entry(key)
            .or_insert_with(|| Arc::new(values.to_vec()));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rewrite the JSON sidecar index if records were appended.
    pub fn flush(&self) -> Result<(), EmbedError> {
        let Some(store) = &self.store else { return Ok(()) };
        let mut store = store.lock();
        if !store.dirty {
            return Ok(());
        }
        let sidecar = sidecar_path(&store.path);
        let doc = serde_json::json!({ "version": 1, "records": store.index });
        fs::write(&sidecar, serde_json::to_vec_pretty(&doc).expect("index serializes")).map_err(|e| {
            EmbedError::Cache {
                path: sidecar.display().to_string(),
                message: e.to_string(),
            }
        })?;
        store.dirty = false;
        Ok(())
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(EMBED_CACHE_INDEX_SUFFIX);
    PathBuf::from(s)
}

impl Drop for EmbeddingCache {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}
