//! Content-addressed store of provider calls.
//!
//! Entries live at `{cache_dir}/{digest[0..2]}/{digest}.json` and hold the
//! full [`ProviderCall`] record. A run pointed at a warm cache replays every
//! response without touching the network; `offline` mode turns a miss into
//! an error instead of a live call.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::ProviderError;
use crate::providers::{elapsed_ms, CallKind, Model, ProviderCall, RetryPolicy, SamplingParams};

/// Hex SHA-256 over the canonical serialization of a call's identity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey(String);

#[derive(Serialize)]
struct KeyMaterial<'a> {
    kind: &'a str,
    provider_id: &'a str,
    model_name: &'a str,
    prompt: &'a str,
    params: Option<&'a SamplingParams>,
    attempt_index: u32,
}

impl CacheKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Two-character fan-out directory name.
    pub fn shard(&self) -> &str {
        &self.0[..2]
    }
}

impl std::fmt::Display for CacheKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Everything that identifies one provider call.
#[derive(Debug, Clone)]
pub struct CallSpec<'a> {
    pub kind: CallKind,
    pub provider_id: &'a str,
    pub model_name: &'a str,
    pub prompt: &'a str,
    pub params: Option<&'a SamplingParams>,
    pub attempt_index: u32,
}

impl CallSpec<'_> {
    pub fn key(&self) -> CacheKey {
        // struct field order is fixed, so the JSON bytes are canonical
        let material = KeyMaterial {
            kind: self.kind.as_str(),
            provider_id: self.provider_id,
            model_name: self.model_name,
            prompt: self.prompt,
            params: self.params,
            attempt_index: self.attempt_index,
        };
        let bytes = serde_json::to_vec(&material).expect("key material serializes");
        CacheKey(hex::encode(Sha256::digest(&bytes)))
    }

    fn record(&self, key: &CacheKey, response: String, latency_ms: u64) -> ProviderCall {
        ProviderCall {
            call_id: key.as_str().to_string(),
            kind: self.kind,
            provider_id: self.provider_id.to_string(),
            model_name: self.model_name.to_string(),
            prompt: self.prompt.to_string(),
            params: self.params.cloned(),
            attempt_index: self.attempt_index,
            response,
            latency_ms,
            from_cache: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
}

/// Decodes a stored entry, rejecting records whose id does not match `key`.
pub fn decode_entry(bytes: &[u8], key: Option<&CacheKey>) -> Result<ProviderCall, String> {
    let call: ProviderCall = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
    if let Some(key) = key {
        if call.call_id != key.as_str() {
            return Err(format!("entry id {} does not match key {key}", call.call_id));
        }
    }
    Ok(call)
}

#[derive(Debug, Default)]
pub struct ResponseCache {
    dir: Option<PathBuf>,
    offline: bool,
    memory: Mutex<HashMap<CacheKey, ProviderCall>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl ResponseCache {
    /// A cache that only lives for the current process.
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Self {
        ResponseCache {
            dir: Some(dir.into()),
            ..Self::default()
        }
    }

    pub fn offline(mut self, offline: bool) -> Self {
        self.offline = offline;
        self
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn is_offline(&self) -> bool {
        self.offline
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
        }
    }

    pub fn entry_path(&self, key: &CacheKey) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(key.shard()).join(format!("{key}.json")))
    }

    /// Returns the stored response for a generation request, or delegates to
    /// the model and stores what it returns.
    pub fn cached_generate(
        &self,
        model: &Model,
        prompt: &str,
        params: &SamplingParams,
        attempt_index: u32,
        retry: &RetryPolicy,
    ) -> Result<ProviderCall, ProviderError> {
        let spec = CallSpec {
            kind: CallKind::Generate,
            provider_id: &model.reference.provider_id,
            model_name: &model.reference.model_name,
            prompt,
            params: Some(params),
            attempt_index,
        };
        self.get_or_compute(&spec, || model.invoke(prompt, params, attempt_index, retry))
    }

    /// Generic read-through lookup used for every call kind.
    pub fn get_or_compute(
        &self,
        spec: &CallSpec<'_>,
        compute: impl FnOnce() -> Result<String, ProviderError>,
    ) -> Result<ProviderCall, ProviderError> {
        let key = spec.key();
        if let Some(mut hit) = self.lookup(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            hit.from_cache = true;
            return Ok(hit);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        if self.offline {
            return Err(ProviderError::Offline(key.to_string()));
        }
        let start = Instant::now();
        let response = compute()?;
        let call = spec.record(&key, response, elapsed_ms(start));
        if let Err(e) = self.store(&key, &call) {
            log::warn!("could not persist cache entry {key}: {e}");
        }
        Ok(call)
    }

    fn lookup(&self, key: &CacheKey) -> Option<ProviderCall> {
        if let Some(hit) = self.memory.lock().expect("cache poisoned").get(key) {
            return Some(hit.clone());
        }
        let path = self.entry_path(key)?;
        let bytes = fs::read(&path).ok()?;
        match decode_entry(&bytes, Some(key)) {
            Ok(call) => {
                self.memory
                    .lock()
                    .expect("cache poisoned")
                    .insert(key.clone(), call.clone());
                Some(call)
            }
            Err(e) => {
                log::warn!("corrupt cache entry {}: {e}; treating as miss", path.display());
                None
            }
        }
    }

    fn store(&self, key: &CacheKey, call: &ProviderCall) -> std::io::Result<()> {
        self.memory
            .lock()
            .expect("cache poisoned")
            .insert(key.clone(), call.clone());
        let Some(path) = self.entry_path(key) else {
            return Ok(());
        };
        let shard = path.parent().expect("entry has a shard directory");
        fs::create_dir_all(shard)?;
        let mut tmp = tempfile::NamedTempFile::new_in(shard)?;
        serde_json::to_writer_pretty(&mut tmp, call)?;
        tmp.write_all(b"\n")?;
        tmp.as_file().sync_all()?;
        tmp.persist(&path).map_err(|e| e.error)?;
        Ok(())
    }
}
