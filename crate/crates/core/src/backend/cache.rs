//! Content-addressed record/replay cache.
//!
//! Entries live at `<dir>/<key[..2]>/<key>.json`, where the key hashes the
//! trial id together with the generation parameters. Each entry keeps the
//! raw response document along with the metadata needed to rebuild the
//! original record byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{extract_content, Backend, BackendError, Completion, GenerationParams};
use crate::experiment::TrialSpec;
use crate::jsonl::write_atomic;

/// Cache key for a trial under the given parameters. Any parameter change
/// (temperature included) yields a different key.
pub fn cache_key(trial_id: &str, params: &GenerationParams) -> String {
    let canonical = serde_json::to_vec(&(trial_id, params)).expect("params serialize");
    hex::encode(Sha256::digest(&canonical))
}

fn prompt_key(prompt: &str, params: &GenerationParams) -> String {
    cache_key(
        &format!("prompt:{}", hex::encode(Sha256::digest(prompt.as_bytes()))),
        params,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub trial_id: Option<String>,
    pub params: GenerationParams,
    pub backend_id: String,
    pub latency_ms: u64,
    pub recorded_at: DateTime<Utc>,
    pub response: Value,
}

#[derive(Debug, Clone)]
pub struct ReplayCache {
    dir: PathBuf,
}

impl ReplayCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<CacheEntry>, BackendError> {
        let path = self.path_for(key);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| BackendError::Cache(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(BackendError::Cache(format!("{}: {e}", path.display()))),
        }
    }

    /// Atomic write; concurrent writers of the same key race harmlessly.
    pub fn put(&self, entry: &CacheEntry) -> Result<(), BackendError> {
        let path = self.path_for(&entry.key);
        let bytes = serde_json::to_vec_pretty(entry).expect("entry serializes");
        write_atomic(&path, &bytes)
            .map_err(|e| BackendError::Cache(format!("{}: {e}", path.display())))
    }

    pub fn len(&self) -> usize {
        walk_count(&self.dir)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn walk_count(dir: &Path) -> usize {
    let Ok(entries) = fs::read_dir(dir) else {
        return 0;
    };
    entries
        .flatten()
        .map(|e| {
            let path = e.path();
            if path.is_dir() {
                walk_count(&path)
            } else {
                usize::from(path.extension().is_some_and(|x| x == "json"))
            }
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheMode {
    /// Serve hits from the cache, forward misses and store their responses.
    Record,
    /// Serve hits only; a miss is an error.
    ReplayOnly,
}

/// Wraps a backend with the replay cache.
pub struct CachedBackend {
    inner: Option<Box<dyn Backend>>,
    cache: ReplayCache,
    mode: CacheMode,
    id: String,
}

impl CachedBackend {
    pub fn record(inner: Box<dyn Backend>, cache: ReplayCache) -> Self {
        let id = inner.id().to_string();
        Self {
            inner: Some(inner),
            cache,
            mode: CacheMode::Record,
            id,
        }
    }

    pub fn replay_only(cache: ReplayCache) -> Self {
        Self {
            inner: None,
            cache,
            mode: CacheMode::ReplayOnly,
            id: "replay".to_string(),
        }
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    fn completion_from(entry: CacheEntry) -> Result<Completion, BackendError> {
        Ok(Completion {
            text: extract_content(&entry.response)?,
            raw: entry.response,
            backend_id: entry.backend_id,
            latency_ms: entry.latency_ms,
            timestamp: entry.recorded_at,
        })
    }
}

impl Backend for CachedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(
        &self,
        prompt: &str,
        params: &GenerationParams,
        metadata: Option<&TrialSpec>,
    ) -> Result<Completion, BackendError> {
        if prompt.is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        let key = match metadata {
            Some(spec) => cache_key(&spec.trial_id, params),
            None => prompt_key(prompt, params),
        };
        if let Some(entry) = self.cache.get(&key)? {
            return Self::completion_from(entry);
        }
        let inner = match (&self.inner, self.mode) {
            (Some(inner), CacheMode::Record) => inner,
            _ => return Err(BackendError::CacheMiss(key)),
        };
        let completion = inner.complete(prompt, params, metadata)?;
        let entry = CacheEntry {
            key,
            trial_id: metadata.map(|s| s.trial_id.clone()),
            params: params.clone(),
            backend_id: completion.backend_id.clone(),
            latency_ms: completion.latency_ms,
            recorded_at: completion.timestamp,
            response: completion.raw.clone(),
        };
        self.cache.put(&entry)?;
        // Rebuild from the stored entry so a miss and a later hit agree exactly.
        Self::completion_from(entry)
    }

    fn now(&self) -> DateTime<Utc> {
        match &self.inner {
            Some(inner) => inner.now(),
            None => DateTime::UNIX_EPOCH,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockBackend, MockProfile};
    use crate::data;
    use crate::experiment::{build_plan, PlanInputs, PlanOptions};
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    struct Counting {
        inner: MockBackend,
        calls: Arc<AtomicUsize>,
    }

    impl Backend for Counting {
        fn id(&self) -> &str {
            "counting"
        }

        fn complete(
            &self,
            prompt: &str,
            params: &GenerationParams,
            metadata: Option<&TrialSpec>,
        ) -> Result<Completion, BackendError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let mut c = self.inner.complete(prompt, params, metadata)?;
            c.backend_id = "counting".into();
            Ok(c)
        }
    }

    fn spec() -> TrialSpec {
        build_plan(
            &PlanInputs::Sector(data::default_sector_prompts()),
            &PlanOptions::new(1),
        )
        .unwrap()
        .specs
        .remove(0)
    }

    #[test]
    fn key_depends_on_temperature() {
        let p = GenerationParams::default();
        let mut q = p.clone();
        q.temperature = 0.7;
        assert_ne!(cache_key("t1", &p), cache_key("t1", &q));
        assert_eq!(cache_key("t1", &p), cache_key("t1", &p.clone()));
        assert_ne!(cache_key("t1", &p), cache_key("t2", &p));
    }

    #[test]
    fn hit_is_byte_identical_and_skips_inner() {
        let dir = tempfile::tempdir().unwrap();
        let calls = Arc::new(AtomicUsize::new(0));
        let inner = Counting {
            inner: MockBackend::new(MockProfile::forced_correct(1)).unwrap(),
            calls: calls.clone(),
        };
        let cached = CachedBackend::record(Box::new(inner), ReplayCache::new(dir.path()));
        let spec = spec();
        let prompt = spec.render().unwrap();
        let params = GenerationParams::default();
        let first = cached.complete(&prompt, &params, Some(&spec)).unwrap();
        let second = cached.complete(&prompt, &params, Some(&spec)).unwrap();
        assert_eq!(first, second);
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert_eq!(cached.cache.len(), 1);

        let replay = CachedBackend::replay_only(ReplayCache::new(dir.path()));
        assert_eq!(
            replay.complete(&prompt, &params, Some(&spec)).unwrap(),
            first
        );
        let mut hot = params.clone();
        hot.temperature = 1.0;
        assert!(matches!(
            replay.complete(&prompt, &hot, Some(&spec)),
            Err(BackendError::CacheMiss(_))
        ));
    }
}
