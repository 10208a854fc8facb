use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EmbedError, Vector};
use crate::trajlog::read_jsonl;

/// Content address of `text` under a provider identity.
pub fn content_key(provider_id: &str, text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(provider_id.as_bytes());
    hasher.update(b"\n");
    hasher.update(text.as_bytes());
    hex::encode(hasher.finalize())
}

#[derive(Serialize, Deserialize)]
pub(crate) struct CacheRecord {
    pub key: String,
    pub dim: usize,
    pub vector: Vec<f64>,
}

/// Content-addressed vector store, optionally backed by an append-only
/// JSONL file. Entries never change once inserted.
#[derive(Default)]
pub struct EmbeddingCache {
    entries: RwLock<HashMap<String, Vector>>,
    sink: Option<Mutex<File>>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads entries from a precomputed-embedding file without persisting
    /// new ones.
    pub fn from_reader(source: impl BufRead) -> Result<Self, EmbedError> {
        let cache = Self::in_memory();
        cache.load(source)?;
        Ok(cache)
    }

    /// Opens (creating if needed) a persistent cache file; new entries are
    /// appended to it.
    pub fn open(path: &Path) -> Result<Self, EmbedError> {
        let mut cache = Self::in_memory();
        if path.exists() {
            cache.load(BufReader::new(File::open(path)?))?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        cache.sink = Some(Mutex::new(file));
        Ok(cache)
    }

    pub fn load(&self, source: impl BufRead) -> Result<(), EmbedError> {
        let records = read_jsonl::<CacheRecord>(source).map_err(|e| EmbedError::CacheFile(e.to_string()))?;
        let mut entries = self.entries.write();
        for (line, r) in records {
            if r.vector.len() != r.dim {
                return Err(EmbedError::CacheFile(format!(
                    "line {line}: declared dim {} but vector has {} components",
                    r.dim,
                    r.vector.len()
                )));
            }
            let v = Vector::new(r.vector).map_err(|e| EmbedError::CacheFile(format!("line {line}: {e}")))?;
            entries.entry(r.key).or_insert(v);
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<Vector> {
        self.entries.read().get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inserts a vector unless the key is already present; the first value
    /// for a key wins.
    pub fn insert(&self, key: String, vector: Vector) -> Result<(), EmbedError> {
        let mut entries = self.entries.write();
        if entries.contains_key(&key) {
            return Ok(());
        }
        if let Some(sink) = &self.sink {
            let record = CacheRecord { key: key.clone(), dim: vector.dim(), vector: vector.as_slice().to_vec() };
            let mut line = serde_json::to_vec(&record).map_err(|e| EmbedError::CacheFile(e.to_string()))?;
            line.push(b'\n');
            sink.lock().write_all(&line)?;
        }
        entries.insert(key, vector);
        Ok(())
    }

    /// Writes every entry, sorted by key, in the precomputed-embedding format.
    pub fn write_all(&self, mut sink: impl Write) -> std::io::Result<()> {
        let entries = self.entries.read();
        let mut keys: Vec<&String> = entries.keys().collect();
        keys.sort();
        for key in keys {
            let v = &entries[key];
            let record = CacheRecord { key: key.clone(), dim: v.dim(), vector: v.as_slice().to_vec() };
            serde_json::to_writer(&mut sink, &record)?;
            sink.write_all(b"\n")?;
        }
        Ok(())
    }
}
