//! Run-directory persistence: line-delimited record files written
//! atomically (temp + rename), a manifest tracking stage completion, and an
//! advisory lock so only one pipeline process touches a run directory.
//!
//! Nothing in the store depends on wall-clock time or map iteration order,
//! so reruns with unchanged inputs reproduce byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error("run directory {0} is locked (remove the `lock` file if no pipeline is running)")]
    Locked(String),
}

fn io_err(path: &Path, source: std::io::Error) -> StoreError {
    StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Completion entry for one stage: record counts per file it wrote.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct StageEntry {
    pub files: BTreeMap<String, usize>,
}

/// Snapshot of a run: configuration, input hashes, and completed stages.
/// The run id is a digest of the config snapshot and input hashes, so two
/// runs with identical inputs share an id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub stages: BTreeMap<String, StageEntry>,
}

impl RunManifest {
    pub fn new(config: serde_json::Value, inputs: BTreeMap<String, String>) -> Self {
        let mut digest_input = config.to_string();
        for (name, hash) in &inputs {
            digest_input.push_str(name);
            digest_input.push_str(hash);
        }
        let run_id = crate::util::sha256_hex(&digest_input)[..16].to_string();
        Self {
            run_id,
            config,
            inputs,
            stages: BTreeMap::new(),
        }
    }

    pub fn stage_done(&self, stage: &str) -> bool {
        self.stages.contains_key(stage)
    }
}

pub struct RunStore {
    dir: PathBuf,
}

impl RunStore {
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn exists(&self, name: &str) -> bool {
        self.path(name).exists()
    }

    /// Take the advisory lock; released when the guard drops.
    pub fn lock(&self) -> Result<RunLock, StoreError> {
        let path = self.path("lock");
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(mut file) => {
                let _ = writeln!(file, "{}", std::process::id());
                Ok(RunLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(StoreError::Locked(self.dir.display().to_string()))
            }
            Err(e) => Err(io_err(&path, e)),
        }
    }

    fn write_atomic(&self, name: &str, content: &[u8]) -> Result<(), StoreError> {
        let target = self.path(name);
        let temp = self.path(&format!("{name}.tmp"));
        fs::write(&temp, content).map_err(|e| io_err(&temp, e))?;
        fs::rename(&temp, &target).map_err(|e| io_err(&target, e))?;
        Ok(())
    }

    /// Replace a record file with one JSON object per line.
    pub fn write_records<T: Serialize>(&self, name: &str, items: &[T]) -> Result<(), StoreError> {
        let mut out = String::new();
        for item in items {
            out.push_str(&serde_json::to_string(item).expect("record serializes"));
            out.push('\n');
        }
        self.write_atomic(name, out.as_bytes())
    }

    pub fn read_records<T: DeserializeOwned>(&self, name: &str) -> Result<Vec<T>, StoreError> {
        let path = self.path(name);
        let raw = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let mut items = Vec::new();
        for (index, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            items.push(
                serde_json::from_str(line).map_err(|e| StoreError::Malformed {
                    path: path.display().to_string(),
                    line: index + 1,
                    message: e.to_string(),
                })?,
            );
        }
        Ok(items)
    }

    /// Replace a rendered (non-record) file such as CSV or markdown.
    pub fn write_text(&self, name: &str, content: &str) -> Result<(), StoreError> {
        self.write_atomic(name, content.as_bytes())
    }

    pub fn read_manifest(&self) -> Result<Option<RunManifest>, StoreError> {
        let path = self.path("manifest.json");
        if !path.exists() {
            return Ok(None);
        }
        let raw = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let manifest = serde_json::from_str(&raw).map_err(|e| StoreError::Malformed {
            path: path.display().to_string(),
            line: 1,
            message: e.to_string(),
        })?;
        Ok(Some(manifest))
    }

    /// Write the manifest (pretty-printed, trailing newline, atomic).
    pub fn write_manifest(&self, manifest: &RunManifest) -> Result<(), StoreError> {
        let mut out = serde_json::to_string_pretty(manifest).expect("manifest serializes");
        out.push('\n');
        self.write_atomic("manifest.json", out.as_bytes())
    }
}

pub struct RunLock {
    path: PathBuf,
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
