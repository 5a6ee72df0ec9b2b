use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CacheKey, GatewayError};

#[derive(Serialize, Deserialize)]
struct Entry {
    backend_id: String,
    text: String,
}

/// On-disk response store, one JSON file per key, written once.
///
/// Writes go to a temporary file in the same directory and are linked into
/// place without clobbering, so concurrent writers of one key are harmless.
#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(GatewayError::Cache)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{}.json", key.to_hex()))
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<String>, GatewayError> {
        match std::fs::read(self.path_for(key)) {
            Ok(bytes) => {
                let entry: Entry = serde_json::from_slice(&bytes)
                    .map_err(|e| GatewayError::Cache(std::io::Error::new(ErrorKind::InvalidData, e)))?;
                Ok(Some(entry.text))
            }
            Err(e) if e.kind() == ErrorKind::NotFound => Ok(None),
            Err(e) => Err(GatewayError::Cache(e)),
        }
    }

    pub fn put(&self, key: &CacheKey, backend_id: &str, text: &str) -> Result<(), GatewayError> {
        let target = self.path_for(key);
        if target.exists() {
            return Ok(());
        }
        let entry = Entry {
            backend_id: backend_id.to_string(),
            text: text.to_string(),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(GatewayError::Cache)?;
        serde_json::to_writer_pretty(&mut tmp, &entry).map_err(|e| GatewayError::Cache(std::io::Error::other(e)))?;
        tmp.write_all(b"\n").map_err(GatewayError::Cache)?;
        match tmp.persist_noclobber(&target) {
            Ok(_) => Ok(()),
            Err(e) if e.error.kind() == ErrorKind::AlreadyExists => Ok(()),
            Err(e) => Err(GatewayError::Cache(e.error)),
        }
    }

    /// Number of stored entries.
    pub fn len(&self) -> Result<usize, GatewayError> {
        let mut n = 0;
        for entry in std::fs::read_dir(&self.dir).map_err(GatewayError::Cache)? {
            let entry = entry.map_err(GatewayError::Cache)?;
            if entry.path().extension().is_some_and(|e| e == "json") {
                n += 1;
            }
        }
        Ok(n)
    }

    pub fn is_empty(&self) -> Result<bool, GatewayError> {
        self.len().map(|n| n == 0)
    }
}
