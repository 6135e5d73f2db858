//! Content-addressed response cache: `<dir>/<sha256>.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::GatewayError;

/// SHA-256 over length-prefixed parts, hex encoded.
pub fn cache_key(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    content: String,
    response: Value,
}

#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| GatewayError::Cache {
            path: dir.clone(),
            message: e.to_string(),
        })?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<String>, GatewayError> {
        let path = self.path_for(key);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => {
                return Err(GatewayError::Cache {
                    path,
                    message: e.to_string(),
                })
            }
        };
        let entry: Entry = serde_json::from_str(&text).map_err(|e| GatewayError::Cache {
            path,
            message: e.to_string(),
        })?;
        Ok(Some(entry.content))
    }

    /// Writes through a temporary file so readers never see partial entries.
    pub fn put(&self, key: &str, content: &str, response: Value) -> Result<(), GatewayError> {
        let path = self.path_for(key);
        let entry = Entry {
            content: content.to_string(),
            response,
        };
        let text = serde_json::to_string_pretty(&entry).expect("cache entry serializes");
        let tmp = self.dir.join(format!(".{key}.{}.tmp", std::process::id()));
        let fail = |e: std::io::Error| GatewayError::Cache {
            path: path.clone(),
            message: e.to_string(),
        };
        fs::write(&tmp, text).map_err(fail)?;
        fs::rename(&tmp, &path).map_err(fail)
    }
}
