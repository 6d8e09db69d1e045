use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{normalize_whitespace, CueSet};

use super::ExtractError;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExtractionCacheKey {
    pub model: String,
    pub template_id: String,
    pub text_sha256: String,
}

impl ExtractionCacheKey {
    pub fn new(model: &str, template_id: &str, description: &str) -> Self {
        let digest = Sha256::digest(normalize_whitespace(description).as_bytes());
        ExtractionCacheKey {
            model: model.to_string(),
            template_id: template_id.to_string(),
            text_sha256: hex::encode(digest),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    model: String,
    template_id: String,
    text_sha256: String,
    cues: CueSet,
}

/// Content-addressed store of extraction results, optionally persisted as an
/// append-only JSONL file. Reads are concurrent; writes are serialized.
#[derive(Debug, Default)]
pub struct ExtractionCache {
    entries: RwLock<HashMap<ExtractionCacheKey, CueSet>>,
    file: Option<(PathBuf, Mutex<File>)>,
}

impl ExtractionCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Open (or create) a cache file and load its records. A truncated final
    /// line from an interrupted write is skipped.
    pub fn open(path: &Path) -> Result<Self, ExtractError> {
        let cache_err = |message: String| ExtractError::Cache {
            path: path.display().to_string(),
            message,
        };
        let mut entries = HashMap::new();
        let content = if path.exists() {
            std::fs::read_to_string(path).map_err(|e| cache_err(e.to_string()))?
        } else {
            String::new()
        };
        let mut valid_len = 0;
        let mut needs_newline = false;
        let mut offset = 0;
        for (i, line) in content.split_inclusive('\n').enumerate() {
            offset += line.len();
            let complete = line.ends_with('\n');
            if line.trim().is_empty() {
                valid_len = offset;
                continue;
            }
            match serde_json::from_str::<Record>(line.trim_end()) {
                Ok(r) => {
                    let key = ExtractionCacheKey {
                        model: r.model,
                        template_id: r.template_id,
                        text_sha256: r.text_sha256,
                    };
                    entries.insert(key, r.cues);
                    valid_len = offset;
                    needs_newline = !complete;
                }
                // torn final record: dropped and truncated below
                Err(_) if !complete => {}
                Err(e) => return Err(cache_err(format!("line {}: {e}", i + 1))),
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| cache_err(e.to_string()))?;
        if valid_len < content.len() {
            file.set_len(valid_len as u64).map_err(|e| cache_err(e.to_string()))?;
        }
        if needs_newline {
            file.write_all(b"\n").map_err(|e| cache_err(e.to_string()))?;
        }
        Ok(ExtractionCache {
            entries: RwLock::new(entries),
            file: Some((path.to_path_buf(), Mutex::new(file))),
        })
    }

    pub fn get(&self, key: &ExtractionCacheKey) -> Option<CueSet> {
        self.entries.read().get(key).cloned()
    }

    pub fn insert(&self, key: ExtractionCacheKey, cues: CueSet) -> Result<(), ExtractError> {
        if let Some((path, file)) = &self.file {
            let record = Record {
                model: key.model.clone(),
                template_id: key.template_id.clone(),
                text_sha256: key.text_sha256.clone(),
                cues: cues.clone(),
            };
            let mut line = serde_json::to_string(&record).expect("record serializes");
            line.push('\n');
            let mut f = file.lock();
            f.write_all(line.as_bytes()).map_err(|e| ExtractError::Cache {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        }
        self.entries.write().insert(key, cues);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
