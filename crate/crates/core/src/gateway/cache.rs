//! On-disk transcript cache.
//!
//! Layout under the cache root:
//!
//! ```text
//! index.jsonl                       one {"digest", "model_id"} line per stored entry
//! objects/<d0d1>/<digest>.json      {"request": ..., "response": ...}
//! ```
//!
//! Entries are written to a temporary file and renamed into place, so a
//! reader never observes a partial object.

use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{ChatRequest, ChatResponse, FinishReason, GatewayError, Provenance, Usage};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TranscriptCacheKey(String);

impl TranscriptCacheKey {
    /// SHA-256 over the canonical JSON of model id, temperature and messages.
    pub fn for_request(req: &ChatRequest) -> Self {
        let canonical = json!({
            "model_id": req.model_id,
            "temperature": req.temperature,
            "messages": req.messages,
        });
        let bytes = serde_json::to_vec(&canonical).expect("request serializes");
        Self(hex::encode(Sha256::digest(&bytes)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TranscriptCacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Serialize, Deserialize)]
struct CachedEntry {
    request: ChatRequest,
    content: String,
    finish_reason: FinishReason,
    usage: Usage,
}

#[derive(Debug)]
pub struct TranscriptCache {
    root: PathBuf,
    write_lock: Mutex<()>,
}

fn io_err(path: &Path, e: impl fmt::Display) -> GatewayError {
    GatewayError::Cache(format!("{}: {e}", path.display()))
}

impl TranscriptCache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let root = root.into();
        fs::create_dir_all(root.join("objects")).map_err(|e| io_err(&root, e))?;
        Ok(Self {
            root,
            write_lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn object_path(&self, key: &TranscriptCacheKey) -> PathBuf {
        self.root
            .join("objects")
            .join(&key.0[..2])
            .join(format!("{}.json", key.0))
    }

    pub fn contains(&self, key: &TranscriptCacheKey) -> bool {
        self.object_path(key).is_file()
    }

    pub fn lookup(&self, key: &TranscriptCacheKey) -> Result<Option<ChatResponse>, GatewayError> {
        let path = self.object_path(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io_err(&path, e)),
        };
        let entry: CachedEntry = serde_json::from_slice(&bytes).map_err(|e| io_err(&path, e))?;
        Ok(Some(ChatResponse {
            content: entry.content,
            finish_reason: entry.finish_reason,
            usage: entry.usage,
            provenance: Provenance::Cache,
        }))
    }

    pub fn store(
        &self,
        key: &TranscriptCacheKey,
        req: &ChatRequest,
        resp: &ChatResponse,
    ) -> Result<(), GatewayError> {
        let path = self.object_path(key);
        let _guard = self.write_lock.lock().unwrap();
        if path.is_file() {
            return Ok(());
        }
        let dir = path.parent().expect("object path has a parent");
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;

        let entry = CachedEntry {
            request: req.clone(),
            content: resp.content.clone(),
            finish_reason: resp.finish_reason,
            usage: resp.usage,
        };
        let tmp = path.with_extension("json.tmp");
        let body = serde_json::to_vec_pretty(&entry).map_err(|e| io_err(&tmp, e))?;
        fs::write(&tmp, body).map_err(|e| io_err(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| io_err(&path, e))?;

        let index = self.root.join("index.jsonl");
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&index)
            .map_err(|e| io_err(&index, e))?;
        let line = json!({ "digest": key.0, "model_id": req.model_id });
        writeln!(f, "{line}").map_err(|e| io_err(&index, e))?;
        Ok(())
    }

    /// Digests listed in the index manifest, in insertion order.
    pub fn indexed_digests(&self) -> Result<Vec<String>, GatewayError> {
        let index = self.root.join("index.jsonl");
        let text = match fs::read_to_string(&index) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&index, e)),
        };
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let v: serde_json::Value = serde_json::from_str(l).map_err(|e| io_err(&index, e))?;
                v["digest"]
                    .as_str()
                    .map(str::to_owned)
                    .ok_or_else(|| io_err(&index, "entry without digest"))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Message;

    fn req(content: &str) -> ChatRequest {
        ChatRequest::single("model-a", content, 64)
    }

    fn resp(content: &str) -> ChatResponse {
        ChatResponse {
            content: content.into(),
            finish_reason: FinishReason::Stop,
            usage: Usage {
                prompt_tokens: 3,
                completion_tokens: 5,
            },
            provenance: Provenance::Live,
        }
    }

    #[test]
    fn digest_depends_on_model_temperature_and_messages() {
        let base = TranscriptCacheKey::for_request(&req("hello"));
        assert_eq!(base, TranscriptCacheKey::for_request(&req("hello")));
        assert_eq!(base.as_str().len(), 64);

        let mut r = req("hello");
        r.model_id = "model-b".into();
        assert_ne!(base, TranscriptCacheKey::for_request(&r));

        let mut r = req("hello");
        r.temperature = 0.5;
        assert_ne!(base, TranscriptCacheKey::for_request(&r));

        let mut r = req("hello");
        r.messages.push(Message::assistant("x"));
        assert_ne!(base, TranscriptCacheKey::for_request(&r));

        assert_ne!(base, TranscriptCacheKey::for_request(&req("hellp")));

        // max_tokens is not part of the key.
        let mut r = req("hello");
        r.max_tokens = 1;
        assert_eq!(base, TranscriptCacheKey::for_request(&r));
    }

    #[test]
    fn store_then_lookup() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TranscriptCache::open(dir.path()).unwrap();
        let r = req("q");
        let key = TranscriptCacheKey::for_request(&r);
        assert_eq!(cache.lookup(&key).unwrap(), None);
        cache.store(&key, &r, &resp("answer")).unwrap();
        let hit = cache.lookup(&key).unwrap().unwrap();
        assert_eq!(hit.content, "answer");
        assert_eq!(hit.provenance, Provenance::Cache);
        assert_eq!(hit.usage.completion_tokens, 5);
        assert!(cache.contains(&key));

        // A second store of the same digest is a no-op.
        cache.store(&key, &r, &resp("other")).unwrap();
        assert_eq!(cache.lookup(&key).unwrap().unwrap().content, "answer");
        assert_eq!(cache.indexed_digests().unwrap(), [key.to_string()]);
    }

    #[test]
    fn reopened_cache_sees_previous_entries() {
        let dir = tempfile::tempdir().unwrap();
        let r = req("persist");
        let key = TranscriptCacheKey::for_request(&r);
        TranscriptCache::open(dir.path())
            .unwrap()
            .store(&key, &r, &resp("kept"))
            .unwrap();
        let again = TranscriptCache::open(dir.path()).unwrap();
        assert_eq!(again.lookup(&key).unwrap().unwrap().content, "kept");
    }

    #[test]
    fn corrupt_object_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TranscriptCache::open(dir.path()).unwrap();
        let r = req("bad");
        let key = TranscriptCacheKey::for_request(&r);
        let path = cache.object_path(&key);
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, "not json").unwrap();
        assert!(matches!(cache.lookup(&key), Err(GatewayError::Cache(_))));
    }
}
