//! Persistent embedding cache, keyed by (provider, model, text hash).
//!
//! The on-disk format is one JSON record per line:
//! `{"provider","model","text_hash","dims","values"}`. Values are exact
//! f64 round-trips, so cached and freshly computed vectors are identical.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::EmbedError;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub provider: String,
    pub model: String,
    pub text_hash: String,
    pub dims: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    provider: String,
    model: String,
    text_hash: String,
    dims: usize,
    values: Vec<f64>,
}

/// Thread-safe embedding cache with optional file persistence. Inserts with
/// identical keys are last-write-wins; by provider determinism the values
/// are identical, so no conflict is observable.
pub struct EmbeddingCache {
    path: Option<PathBuf>,
    map: Mutex<HashMap<CacheKey, Vec<f64>>>,
}

impl EmbeddingCache {
    /// In-memory only.
    pub fn in_memory() -> Self {
        Self {
            path: None,
            map: Mutex::new(HashMap::new()),
        }
    }

    /// Backed by a line-delimited record file; loads existing entries.
    pub fn open(path: &Path) -> Result<Self, EmbedError> {
        let mut map = HashMap::new();
        if path.exists() {
            let raw = std::fs::read_to_string(path)
                .map_err(|e| EmbedError::Cache(format!("{}: {e}", path.display())))?;
            for (line_no, line) in raw.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let record: CacheRecord = serde_json::from_str(line).map_err(|e| {
                    EmbedError::Cache(format!("{}:{}: {e}", path.display(), line_no + 1))
                })?;
                map.insert(
                    CacheKey {
                        provider: record.provider,
                        model: record.model,
                        text_hash: record.text_hash,
                        dims: record.dims,
                    },
                    record.values,
                );
            }
        }
        Ok(Self {
            path: Some(path.to_path_buf()),
            map: Mutex::new(map),
        })
    }

    pub fn get(&self, key: &CacheKey) -> Option<Vec<f64>> {
        self.map.lock().expect("cache lock").get(key).cloned()
    }

    pub fn insert(&self, key: &CacheKey, values: &[f64]) -> Result<(), EmbedError> {
        let mut guard = self.map.lock().expect("cache lock");
        if guard.contains_key(key) {
            return Ok(());
        }
        guard.insert(key.clone(), values.to_vec());
        if let Some(path) = &self.path {
            let record = CacheRecord {
                provider: key.provider.clone(),
                model: key.model.clone(),
                text_hash: key.text_hash.clone(),
                dims: key.dims,
                values: values.to_vec(),
            };
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| EmbedError::Cache(format!("{}: {e}", path.display())))?;
            let mut line =
                serde_json::to_string(&record).map_err(|e| EmbedError::Cache(e.to_string()))?;
            line.push('\n');
            file.write_all(line.as_bytes())
                .map_err(|e| EmbedError::Cache(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
