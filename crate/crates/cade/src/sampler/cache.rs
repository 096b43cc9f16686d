//! Content-addressed reply cache.
//!
//! One JSONL record per reply, sharded by fingerprint prefix. Appends are
//! serialized; reads go through an in-memory index loaded at open time, so
//! repeated experiments replay without touching the network.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Key for one reply: model, full prompt text, temperature, sample index.
pub fn fingerprint(
    model: &str,
    system: &str,
    user: &str,
    temperature: f64,
    sample_index: usize,
) -> String {
    let mut hasher = Sha256::new();
    for part in [model, system, user] {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    hasher.update(temperature.to_le_bytes());
    hasher.update((sample_index as u64).to_le_bytes());
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    fingerprint: String,
    timestamp: u64,
    raw: String,
}

#[derive(Debug)]
pub struct ReplyCache {
    dir: PathBuf,
    index: Mutex<HashMap<String, String>>,
}

impl ReplyCache {
    /// Open (or create) a cache directory and load its index.
    pub fn open(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut index = HashMap::new();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let path = entry.path();
            if path.extension().is_none_or(|ext| ext != "jsonl") {
                continue;
            }
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: CacheRecord =
                    serde_json::from_str(&line).map_err(|e| Error::json(&path, e))?;
                index.insert(record.fingerprint, record.raw);
            }
        }
        Ok(ReplyCache {
            dir: dir.to_path_buf(),
            index: Mutex::new(index),
        })
    }

    pub fn get(&self, fingerprint: &str) -> Option<String> {
        self.index.lock().unwrap().get(fingerprint).cloned()
    }

    /// Append one reply. Appends are serialized by the index lock; existing
    /// fingerprints are left untouched.
    pub fn put(&self, fingerprint: &str, raw: &str) -> Result<()> {
        let mut index = self.index.lock().unwrap();
        if index.contains_key(fingerprint) {
            return Ok(());
        }
        let shard = self.dir.join(format!("{}.jsonl", &fingerprint[..2]));
        let record = CacheRecord {
            fingerprint: fingerprint.to_string(),
            timestamp: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            raw: raw.to_string(),
        };
        let line = serde_json::to_string(&record).map_err(|e| Error::json(&shard, e))?;
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&shard)
            .map_err(|e| Error::io(&shard, e))?;
        writeln!(file, "{line}").map_err(|e| Error::io(&shard, e))?;
        index.insert(fingerprint.to_string(), raw.to_string());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.index.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sorted fingerprints currently in the cache.
    pub fn fingerprints(&self) -> Vec<String> {
        let mut all: Vec<String> = self.index.lock().unwrap().keys().cloned().collect();
        all.sort();
        all
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprints_are_stable_and_distinct() {
        let a = fingerprint("m", "sys", "user", 0.5, 0);
        let b = fingerprint("m", "sys", "user", 0.5, 0);
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
        assert_ne!(a, fingerprint("m", "sys", "user", 0.5, 1));
        assert_ne!(a, fingerprint("m", "sys", "user", 0.75, 0));
        assert_ne!(a, fingerprint("m2", "sys", "user", 0.5, 0));
        // field boundaries matter
        assert_ne!(
            fingerprint("ab", "c", "u", 0.0, 0),
            fingerprint("a", "bc", "u", 0.0, 0)
        );
    }

    #[test]
    fn cache_round_trip_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ReplyCache::open(dir.path()).unwrap();
        let fp = fingerprint("m", "s", "u", 0.0, 0);
        assert!(cache.get(&fp).is_none());
        cache.put(&fp, "Rating: 4").unwrap();
        assert_eq!(cache.get(&fp).as_deref(), Some("Rating: 4"));

        let reopened = ReplyCache::open(dir.path()).unwrap();
        assert_eq!(reopened.get(&fp).as_deref(), Some("Rating: 4"));
        assert_eq!(reopened.len(), 1);
    }

    #[test]
    fn put_is_append_only_first_write_wins() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ReplyCache::open(dir.path()).unwrap();
        let fp = fingerprint("m", "s", "u", 0.0, 0);
        cache.put(&fp, "first").unwrap();
        cache.put(&fp, "second").unwrap();
        assert_eq!(cache.get(&fp).as_deref(), Some("first"));
    }
}
