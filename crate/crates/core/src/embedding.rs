//! Unit-normalized embedding tables and their on-disk formats.
//!
//! The binary layout is
//!
//! ```text
//! "VEMB" | u32 version (=1) | u32 rows | u32 dim | rows*dim f32, row-major
//! ```
//!
//! all little-endian, with an ordered JSON list of row keys in a sidecar
//! file named `<file>.keys.json`. A JSON form
//! `{"dim": D, "entries": [{"key": k, "vec": [...]}, ...]}` is accepted as
//! well; it is selected by a `.json` extension.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const VEMB_MAGIC: &[u8; 4] = b"VEMB";
pub const VEMB_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// Rows smaller than this cannot be normalized meaningfully.
const MIN_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    keys: Vec<String>,
    values: Vec<f32>,
    index: HashMap<String, usize>,
}

impl EmbeddingMatrix {
    /// Builds a matrix from raw rows, normalizing each to unit length.
    pub fn new(dim: usize, keys: Vec<String>, values: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Embedding("dim must be positive".into()));
        }
        if values.len() != keys.len() * dim {
            return Err(Error::Embedding(format!(
                "{} keys x dim {dim} needs {} values, got {}",
                keys.len(),
                keys.len() * dim,
                values.len()
            )));
        }
        let mut index = HashMap::with_capacity(keys.len());
        for (i, k) in keys.iter().enumerate() {
            if index.insert(k.clone(), i).is_some() {
                return Err(Error::Embedding(format!("duplicate key \"{k}\"")));
            }
        }
        let mut values = values;
        for (row, key) in values.chunks_mut(dim).zip(&keys) {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Embedding(format!("row \"{key}\" has non-finite values")));
            }
            let norm = row.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
            if norm < MIN_NORM {
                return Err(Error::Embedding(format!("row \"{key}\" has zero norm")));
            }
            for v in row.iter_mut() {
                *v = ((*v as f64) / norm) as f32;
            }
        }
        Ok(Self {
            dim,
            keys,
            values,
            index,
        })
    }

    /// Convenience constructor from `(key, vector)` pairs.
    pub fn from_rows<K, I>(dim: usize, rows: I) -> Result<Self>
    where
        K: Into<String>,
        I: IntoIterator<Item = (K, Vec<f32>)>,
    {
        let mut keys = Vec::new();
        let mut values = Vec::new();
        for (k, v) in rows {
            let k = k.into();
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: v.len(),
                });
            }
            keys.push(k);
            values.extend(v);
        }
        Self::new(dim, keys, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn index_of(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn get(&self, key: &str) -> Option<&[f32]> {
        self.index_of(key).map(|i| self.row(i))
    }

    /// Keeps only the rows whose key passes `keep`, preserving row order.
    pub fn filter(&self, mut keep: impl FnMut(&str) -> bool) -> Self {
        let mut keys = Vec::new();
        let mut values = Vec::new();
        for (i, k) in self.keys.iter().enumerate() {
            if keep(k) {
                keys.push(k.clone());
                values.extend_from_slice(self.row(i));
            }
        }
        let index = keys.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        Self {
            dim: self.dim,
            keys,
            values,
            index,
        }
    }

    /// Loads either format; `.json` files use the JSON form.
    pub fn load(path: &Path) -> Result<Self> {
        if path.extension().is_some_and(|e| e == "json") {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Self::from_json(&text)
        } else {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            let keys_path = keys_sidecar(path);
            let keys_text = fs::read_to_string(&keys_path).map_err(|e| Error::io(&keys_path, e))?;
            let keys: Vec<String> = serde_json::from_str(&keys_text).map_err(|e| Error::Parse {
                path: keys_path,
                line: e.line(),
                message: e.to_string(),
            })?;
            Self::from_vemb(&bytes, keys)
        }
    }

    /// Writes the binary form plus its key sidecar.
    pub fn save_vemb(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_vemb()).map_err(|e| Error::io(path, e))?;
        let keys_path = keys_sidecar(path);
        let keys = serde_json::to_string(&self.keys).expect("keys serialize");
        fs::write(&keys_path, keys).map_err(|e| Error::io(&keys_path, e))
    }

    pub fn to_vemb(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.values.len() * 4);
        out.extend_from_slice(VEMB_MAGIC);
        out.extend_from_slice(&VEMB_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_vemb(bytes: &[u8], keys: Vec<String>) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Embedding("truncated VEMB header".into()));
        }
        if &bytes[..4] != VEMB_MAGIC {
            return Err(Error::Embedding("bad magic, expected \"VEMB\"".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let version = word(4);
        if version != VEMB_VERSION {
            return Err(Error::Embedding(format!("unsupported VEMB version {version}")));
        }
        let rows = word(8) as usize;
        let dim = word(12) as usize;
        let expected = rows
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Embedding("VEMB size overflow".into()))?;
        let body = &bytes[HEADER_LEN..];
        if body.len() != expected {
            return Err(Error::Embedding(format!(
                "VEMB body has {} bytes, header implies {expected}",
                body.len()
            )));
        }
        if keys.len() != rows {
            return Err(Error::Embedding(format!(
                "key sidecar lists {} keys for {rows} rows",
                keys.len()
            )));
        }
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(dim, keys, values)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: JsonEmbeddings = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: PathBuf::from("<embeddings>"),
            line: e.line(),
            message: e.to_string(),
        })?;
        Self::from_rows(file.dim, file.entries.into_iter().map(|e| (e.key, e.vec)))
    }

    pub fn to_json(&self) -> String {
        let file = JsonEmbeddings {
            dim: self.dim,
            entries: (0..self.rows())
                .map(|i| JsonEntry {
                    key: self.keys[i].clone(),
                    vec: self.row(i).to_vec(),
                })
                .collect(),
        };
        serde_json::to_string(&file).expect("embeddings serialize")
    }
}

/// `<file>.keys.json`
pub fn keys_sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".keys.json");
    PathBuf::from(name)
}

/// Dot product accumulated in f64.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Cosine similarity, 0 when either vector is zero.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let norms = (dot(a, a) * dot(b, b)).sqrt();
    if norms == 0.0 {
        return 0.0;
    }
    (dot(a, b) / norms).clamp(-1.0, 1.0)
}

#[derive(Serialize, Deserialize)]
struct JsonEmbeddings {
    dim: usize,
    entries: Vec<JsonEntry>,
}

#[derive(Serialize, Deserialize)]
struct JsonEntry {
    key: String,
    vec: Vec<f32>,
}
