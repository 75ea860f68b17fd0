//! Content-addressed response cache: `<dir>/<first 2 hex chars>/<key>`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A stored request/response pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub request_key: String,
    pub kind: String,
    pub request: serde_json::Value,
    pub response: serde_json::Value,
}

/// sha256 over the canonical (key-sorted, compact) JSON of
/// `{"kind": kind, "request": request}`.
pub fn request_key(kind: &str, request: &serde_json::Value) -> String {
    let doc = serde_json::json!({ "kind": kind, "request": request });
    hex::encode(Sha256::digest(doc.to_string().as_bytes()))
}

#[derive(Debug)]
pub struct DiskCache {
    root: PathBuf,
}

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl DiskCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DiskCache { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.root.join(&key[..2.min(key.len())]).join(key)
    }

    pub fn get(&self, key: &str) -> io::Result<Option<CacheRecord>> {
        match fs::read(self.path_for(key)) {
            Ok(bytes) => {
                serde_json::from_slice(&bytes).map(Some).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Writes to a unique temp file in the shard directory, then renames it
    /// into place, so readers never see a partial record.
    pub fn put(&self, record: &CacheRecord) -> io::Result<()> {
        let path = self.path_for(&record.request_key);
        let dir = path.parent().expect("cache path has a shard directory");
        fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(
            ".{}.{}.{}.tmp",
            record.request_key,
            std::process::id(),
            TEMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&serde_json::to_vec_pretty(record).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?)?;
        f.write_all(b"\n")?;
        f.sync_all()?;
        drop(f);
        fs::rename(&tmp, &path)
    }
}
