//! Append-only JSONL caches keyed by content hash.
//!
//! Reads are shared; appends go through a single serialized writer so
//! concurrent workers never interleave partial lines.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed cache line {line} in {path}: {source}")]
    Malformed {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// A record that can live in a [`JsonlCache`].
pub trait Keyed {
    fn key(&self) -> &str;
}

/// SHA-256 over the parts, separated by an ASCII unit separator.
pub fn content_key(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            hasher.update([0x1f]);
        }
        hasher.update(part.as_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Seconds since the unix epoch, for cache record timestamps.
pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub struct JsonlCache<R> {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<String, R>>,
    writer: Mutex<Option<File>>,
}

impl<R: Keyed + Clone + Serialize + DeserializeOwned> JsonlCache<R> {
    /// A cache that never touches the filesystem.
    pub fn in_memory() -> Self {
        JsonlCache {
            path: None,
            entries: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
        }
    }

    /// Loads `path` if it exists. Later lines override earlier ones.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CacheError> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|source| CacheError::Io {
                path: path.clone(),
                source,
            })?;
            for (idx, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|source| CacheError::Io {
                    path: path.clone(),
                    source,
                })?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: R = serde_json::from_str(&line).map_err(|source| CacheError::Malformed {
                    path: path.clone(),
                    line: idx + 1,
                    source,
                })?;
                entries.insert(record.key().to_string(), record);
            }
        }
        Ok(JsonlCache {
            path: Some(path),
            entries: RwLock::new(entries),
            writer: Mutex::new(None),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<R> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn append(&self, record: R) -> Result<(), CacheError> {
        let mut writer = self.writer.lock().expect("cache writer lock");
        if let Some(path) = &self.path {
            if writer.is_none() {
                if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                    std::fs::create_dir_all(parent).map_err(|source| CacheError::Io {
                        path: parent.to_path_buf(),
                        source,
                    })?;
                }
                let file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|source| CacheError::Io {
                        path: path.clone(),
                        source,
                    })?;
                *writer = Some(file);
            }
            let mut line = serde_json::to_string(&record).expect("cache records serialize");
            line.push('\n');
            let file = writer.as_mut().expect("writer opened above");
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|source| CacheError::Io {
                    path: path.clone(),
                    source,
                })?;
        }
        self.entries
            .write()
            .expect("cache lock")
            .insert(record.key().to_string(), record);
        Ok(())
    }
}
