use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry<T> {
    query: String,
    fetched_at: String,
    documents: T,
}

/// Hex SHA-256 of a string.
pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// On-disk response cache laid out as `<root>/<source>/<sha256 of query>.json`.
///
/// Concurrent lookups of the same key are serialized so the fetch runs once
/// and every caller sees the stored result.
#[derive(Debug)]
pub struct ResponseCache {
    root: PathBuf,
    offline: bool,
    locks: Mutex<HashMap<PathBuf, Arc<Mutex<()>>>>,
}

impl ResponseCache {
    pub fn new(root: impl Into<PathBuf>, offline: bool) -> Self {
        Self {
            root: root.into(),
            offline,
            locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn offline(&self) -> bool {
        self.offline
    }

    pub fn path_for(&self, source: &str, query: &str) -> PathBuf {
        self.root
            .join(source)
            .join(format!("{}.json", sha256_hex(query)))
    }

    fn key_lock(&self, path: &Path) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(path.to_path_buf()).or_default().clone()
    }

    /// Returns the cached documents for `query`, calling `fetch` and storing
    /// its result on a miss. Offline caches turn a miss into an error.
    pub fn get_or_fetch<T, F>(&self, source: &str, query: &str, fetch: F) -> Result<T>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T>,
    {
        let path = self.path_for(source, query);
        let lock = self.key_lock(&path);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        if path.exists() {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let entry: CacheEntry<T> = serde_json::from_str(&text)
                .map_err(|e| Error::data(format!("corrupt cache entry {}: {e}", path.display())))?;
            return Ok(entry.documents);
        }
        if self.offline {
            return Err(Error::CacheMiss {
                source_name: source.to_string(),
                query: query.to_string(),
            });
        }
        let documents = fetch()?;
        let entry = CacheEntry {
            query: query.to_string(),
            fetched_at: chrono::Utc::now().to_rfc3339(),
            documents,
        };
        let dir = path.parent().expect("cache path has a parent");
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let tmp = path.with_extension("json.tmp");
        let body = serde_json::to_string_pretty(&entry)?;
        fs::write(&tmp, body).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(entry.documents)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn second_lookup_hits_the_cache() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path(), false);
        let calls = AtomicUsize::new(0);
        let fetch = || {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok(vec!["a".to_string()])
        };
        let a: Vec<String> = cache.get_or_fetch("wikipedia", "dog", fetch).unwrap();
        let bytes = fs::read(cache.path_for("wikipedia", "dog")).unwrap();
        let b: Vec<String> = cache.get_or_fetch("wikipedia", "dog", fetch).unwrap();
        assert_eq!(a, b);
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert_eq!(fs::read(cache.path_for("wikipedia", "dog")).unwrap(), bytes);
        let stored: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(stored["query"], "dog");
        assert!(stored["fetched_at"].is_string());
    }

    #[test]
    fn offline_miss_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path(), true);
        let r: Result<Vec<String>> = cache.get_or_fetch("conceptnet", "x", || Ok(vec![]));
        assert!(matches!(r, Err(Error::CacheMiss { .. })));
    }

    #[test]
    fn concurrent_fetches_of_one_key_store_one_result() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path(), false);
        let calls = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for i in 0..8 {
                let cache = &cache;
                let calls = &calls;
                s.spawn(move || {
                    let got: Vec<usize> = cache
                        .get_or_fetch("wikipedia", "same", || {
                            calls.fetch_add(1, Ordering::SeqCst);
                            std::thread::sleep(std::time::Duration::from_millis(5));
                            Ok(vec![i])
                        })
                        .unwrap();
                    assert_eq!(got.len(), 1);
                });
            }
        });
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn layout_uses_sha256_of_query() {
        let cache = ResponseCache::new("/c", false);
        assert_eq!(
            cache.path_for("wikipedia", "abc"),
            Path::new("/c/wikipedia/ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad.json")
        );
    }
}
