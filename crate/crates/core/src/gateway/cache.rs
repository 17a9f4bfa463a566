//! On-disk completion cache laid out as `<root>/<first two hex chars>/<digest>.json`.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::GenerationParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: String,
    pub prompt: String,
    pub params: GenerationParams,
    pub provider_model: String,
    pub response: String,
    pub created_at: String,
}

#[derive(Debug)]
pub struct CompletionCache {
    root: PathBuf,
    tmp_counter: AtomicU64,
}

impl CompletionCache {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            tmp_counter: AtomicU64::new(0),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        let shard = key.get(..2).unwrap_or("__");
        self.root.join(shard).join(format!("{key}.json"))
    }

    /// A record that fails to parse is reported as a miss.
    pub fn get(&self, key: &str) -> io::Result<Option<CacheRecord>> {
        let path = self.path_for(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e),
        };
        match serde_json::from_slice::<CacheRecord>(&bytes) {
            Ok(record) if record.key == key => Ok(Some(record)),
            Ok(_) => {
                log::warn!("cache record {} has a mismatched key; ignoring", path.display());
                Ok(None)
            }
            Err(e) => {
                log::warn!("unreadable cache record {}: {e}; ignoring", path.display());
                Ok(None)
            }
        }
    }

    /// Writes via a temporary file and rename so readers never see a partial record.
    pub fn put(&self, record: &CacheRecord) -> io::Result<()> {
        let path = self.path_for(&record.key);
        let dir = path.parent().expect("cache path has a shard directory");
        fs::create_dir_all(dir)?;
        let n = self.tmp_counter.fetch_add(1, Ordering::Relaxed);
        let tmp = dir.join(format!(".{}.{}.{n}.tmp", record.key, std::process::id()));
        let json = serde_json::to_vec_pretty(record).map_err(io::Error::from)?;
        fs::write(&tmp, json)?;
        fs::rename(&tmp, &path)
    }

    pub fn len(&self) -> io::Result<usize> {
        let mut n = 0;
        for shard in fs::read_dir(&self.root)? {
            let shard = shard?;
            if !shard.file_type()?.is_dir() {
                continue;
            }
            for entry in fs::read_dir(shard.path())? {
                if entry?.path().extension().is_some_and(|e| e == "json") {
                    n += 1;
                }
            }
        }
        Ok(n)
    }

    pub fn is_empty(&self) -> io::Result<bool> {
        self.len().map(|n| n == 0)
    }
}
