//! Content-addressed response cache.
//!
//! Keyed by a SHA-256 of (role, task, canonical payload JSON), one file per
//! response. Writes go through a temp file and an atomic rename so
//! concurrent readers and writers never observe a partial entry; entries are
//! immutable once written.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{Provider, ProviderError, ProviderRequest, ProviderResponse};

/// Serialize a JSON value with object keys sorted, so logically equal
/// payloads hash identically.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            out.push('{');
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            for (i, k) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}:", Value::String((*k).clone()));
                write_canonical(&map[*k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        other => {
            let _ = write!(out, "{other}");
        }
    }
}

/// Cache key for a request: hex SHA-256 of its canonical form.
pub fn request_key(request: &ProviderRequest) -> String {
    let mut hasher = Sha256::new();
    hasher.update(request.role.as_str().as_bytes());
    hasher.update([0]);
    hasher.update(request.task.as_bytes());
    hasher.update([0]);
    hasher.update(canonical_json(&request.payload).as_bytes());
    hex::encode(hasher.finalize())
}

/// Wraps any provider with an on-disk response cache.
pub struct CachingProvider<P> {
    inner: P,
    dir: PathBuf,
}

impl<P: Provider> CachingProvider<P> {
    pub fn new(inner: P, dir: impl Into<PathBuf>) -> Self {
        CachingProvider {
            inner,
            dir: dir.into(),
        }
    }

    fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(self.inner.role().as_str()).join(format!("{key}.json"))
    }

    fn read_entry(&self, path: &Path) -> Option<ProviderResponse> {
        let bytes = fs::read(path).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    fn write_entry(&self, path: &Path, response: &ProviderResponse) -> Result<(), ProviderError> {
        let parent = path.parent().expect("entry path has a parent");
        fs::create_dir_all(parent).map_err(|e| ProviderError::Cache(e.to_string()))?;
        let tmp = parent.join(format!(
            ".tmp-{}-{:x}",
            std::process::id(),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_nanos())
                .unwrap_or_default()
        ));
        let body = serde_json::to_vec(response).map_err(|e| ProviderError::Cache(e.to_string()))?;
        fs::write(&tmp, body).map_err(|e| ProviderError::Cache(e.to_string()))?;
        fs::rename(&tmp, path).map_err(|e| ProviderError::Cache(e.to_string()))?;
        Ok(())
    }
}

impl<P: Provider> Provider for CachingProvider<P> {
    fn role(&self) -> super::Role {
        self.inner.role()
    }

    fn call(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        let key = request_key(request);
        let path = self.entry_path(&key);
        if let Some(hit) = self.read_entry(&path) {
            return Ok(hit);
        }
        let response = self.inner.call(request)?;
        self.write_entry(&path, &response)?;
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::super::mock::MockEmbedder;
    use super::super::{embed_text, Role};
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct CountingProvider {
        calls: AtomicUsize,
    }

    impl Provider for CountingProvider {
        fn role(&self) -> Role {
            Role::Generator
        }
        fn call(&self, _request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(ProviderResponse {
                payload: serde_json::json!({ "text": format!("call-{n}") }),
            })
        }
    }

    #[test]
    fn canonical_json_sorts_keys() {
        let a: Value = serde_json::from_str(r#"{"b":1,"a":{"d":2,"c":3}}"#).unwrap();
        assert_eq!(canonical_json(&a), r#"{"a":{"c":3,"d":2},"b":1}"#);
    }

    #[test]
    fn identical_requests_hit_cache() {
        let dir = tempfile::tempdir().unwrap();
        let provider = CachingProvider::new(
            CountingProvider {
                calls: AtomicUsize::new(0),
            },
            dir.path(),
        );
        let request = ProviderRequest {
            role: Role::Generator,
            task: "generate".into(),
            payload: serde_json::json!({ "prompt": "p" }),
        };
        let first = provider.call(&request).unwrap();
        let second = provider.call(&request).unwrap();
        let third = provider.call(&request).unwrap();
        assert_eq!(first.payload, second.payload);
        assert_eq!(second.payload, third.payload);
        assert_eq!(provider.inner.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn cached_embeddings_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let provider = CachingProvider::new(MockEmbedder::new(4), dir.path());
        let a = embed_text(&provider, "same text").unwrap();
        let b = embed_text(&provider, "same text").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn key_ignores_payload_key_order() {
        let r1 = ProviderRequest {
            role: Role::Judge,
            task: "judge".into(),
            payload: serde_json::from_str(r#"{"x":1,"y":2}"#).unwrap(),
        };
        let r2 = ProviderRequest {
            role: Role::Judge,
            task: "judge".into(),
            payload: serde_json::from_str(r#"{"y":2,"x":1}"#).unwrap(),
        };
        assert_eq!(request_key(&r1), request_key(&r2));
    }
}
