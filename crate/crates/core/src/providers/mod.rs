//! Uniform access to the four external capabilities an evaluation needs:
//! target generation, judge generation, text embedding, and medical NER.
//!
//! Every backend sits behind a small trait so the pipeline can run against
//! live OpenAI-compatible endpoints or the deterministic mocks in [`mock`].
//! All traffic is routed through [`Providers`], which applies the retry
//! policy, the per-endpoint concurrency bound, and the response cache.

pub mod http;
mod limit;
pub mod mock;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::cache::{CallSpec, ResponseCache};
use crate::error::ProviderError;

pub use limit::Semaphore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Target,
    Judge,
}

/// Identifies a chat model and where to reach it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRef {
    pub provider_id: String,
    pub model_name: String,
    pub endpoint_url: String,
    /// Name of the environment variable holding the API key, never the key itself.
    #[serde(default)]
    pub api_key_env: String,
    pub role: Role,
}

impl ModelRef {
    pub fn validate(&self) -> Result<(), String> {
        url::Url::parse(&self.endpoint_url)
            .map(|_| ())
            .map_err(|e| format!("endpoint_url `{}`: {e}", self.endpoint_url))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SamplingParams {
    /// Fully deterministic settings used for every judge call.
    pub fn deterministic(max_tokens: u32, seed: u64) -> Self {
        SamplingParams {
            temperature: 0.0,
            max_tokens,
            seed: Some(seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CallKind {
    Generate,
    Embed,
    Ner,
}

impl CallKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CallKind::Generate => "generate",
            CallKind::Embed => "embed",
            CallKind::Ner => "ner",
        }
    }
}

/// Record of one provider invocation, as stored in the cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderCall {
    pub call_id: String,
    pub kind: CallKind,
    pub provider_id: String,
    pub model_name: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<SamplingParams>,
    pub attempt_index: u32,
    pub response: String,
    pub latency_ms: u64,
    #[serde(default)]
    pub from_cache: bool,
}

pub struct GenerationRequest<'a> {
    pub prompt: &'a str,
    pub params: &'a SamplingParams,
    /// Distinguishes repeated generations of one prompt.
    pub attempt_index: u32,
}

pub trait TextGenerator: Send + Sync {
    fn generate(&self, model: &ModelRef, request: &GenerationRequest<'_>)
        -> Result<String, ProviderError>;

    /// Cheap health check issued once before a run.
    fn probe(&self, model: &ModelRef) -> Result<(), ProviderError> {
        let params = SamplingParams::deterministic(8, 0);
        self.generate(
            model,
            &GenerationRequest {
                prompt: "ping",
                params: &params,
                attempt_index: 0,
            },
        )
        .map(|_| ())
    }
}

pub trait TextEmbedder: Send + Sync {
    fn provider_id(&self) -> &str;
    fn model_name(&self) -> &str;
    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError>;
}

pub trait EntityTagger: Send + Sync {
    fn provider_id(&self) -> &str;
    fn model_name(&self) -> &str;
    fn entities(&self, text: &str) -> Result<Vec<String>, ProviderError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            max_attempts: 1,
            initial_backoff: Duration::ZERO,
        }
    }

    /// Runs `op` until it succeeds, fails permanently, or the budget is spent.
    pub fn run<T>(
        &self,
        mut op: impl FnMut() -> Result<T, ProviderError>,
    ) -> Result<T, ProviderError> {
        let attempts = self.max_attempts.max(1);
        let mut delay = self.initial_backoff;
        let mut last = None;
        for attempt in 1..=attempts {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_transient() => {
                    log::warn!("provider attempt {attempt}/{attempts} failed: {e}");
                    last = Some(e);
                    if attempt < attempts {
                        std::thread::sleep(delay);
                        delay *= 2;
                    }
                }
                Err(e) => return Err(e),
            }
        }
        let message = match last {
            Some(ProviderError::Unavailable { message, .. }) => message,
            Some(other) => other.to_string(),
            None => "no attempts made".into(),
        };
        Err(ProviderError::Unavailable { attempts, message })
    }
}

/// A chat model bound to its backend and concurrency limit.
#[derive(Clone)]
pub struct Model {
    pub reference: ModelRef,
    backend: Arc<dyn TextGenerator>,
    limiter: Arc<Semaphore>,
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("reference", &self.reference)
            .finish_non_exhaustive()
    }
}

impl Model {
    pub fn new(reference: ModelRef, backend: Arc<dyn TextGenerator>, limiter: Arc<Semaphore>) -> Self {
        Model {
            reference,
            backend,
            limiter,
        }
    }

    /// A model with its own unshared limiter of `permits` slots.
    pub fn standalone(reference: ModelRef, backend: Arc<dyn TextGenerator>, permits: usize) -> Self {
        Model::new(reference, backend, Arc::new(Semaphore::new(permits)))
    }

    pub(crate) fn invoke(
        &self,
        prompt: &str,
        params: &SamplingParams,
        attempt_index: u32,
        retry: &RetryPolicy,
    ) -> Result<String, ProviderError> {
        let request = GenerationRequest {
            prompt,
            params,
            attempt_index,
        };
        retry.run(|| {
            let _permit = self.limiter.acquire();
            self.backend.generate(&self.reference, &request)
        })
    }

    pub fn probe(&self) -> Result<(), ProviderError> {
        let _permit = self.limiter.acquire();
        self.backend.probe(&self.reference)
    }
}

/// An embedding plus a flag for inputs that have no meaningful direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub vector: Vec<f64>,
    pub degenerate: bool,
}

/// Ordered list of call ids issued while scoring one item.
#[derive(Debug, Default)]
pub struct CallLog {
    ids: Mutex<Vec<String>>,
}

impl CallLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, call: &ProviderCall) {
        self.ids.lock().expect("call log poisoned").push(call.call_id.clone());
    }

    pub fn len(&self) -> usize {
        self.ids.lock().expect("call log poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot(&self) -> Vec<String> {
        self.ids.lock().expect("call log poisoned").clone()
    }
}

/// Entry point for all provider traffic during a run.
pub struct Providers {
    pub target: Model,
    pub judge: Model,
    embedder: Arc<dyn TextEmbedder>,
    tagger: Arc<dyn EntityTagger>,
    embed_limiter: Arc<Semaphore>,
    cache: Arc<ResponseCache>,
    retry: RetryPolicy,
    embed_dim: OnceLock<usize>,
}

impl Providers {
    pub fn new(
        target: Model,
        judge: Model,
        embedder: Arc<dyn TextEmbedder>,
        tagger: Arc<dyn EntityTagger>,
        cache: Arc<ResponseCache>,
    ) -> Self {
        Providers {
            target,
            judge,
            embedder,
            tagger,
            embed_limiter: Arc::new(Semaphore::new(4)),
            cache,
            retry: RetryPolicy::default(),
            embed_dim: OnceLock::new(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_embedding_parallelism(mut self, permits: usize) -> Self {
        self.embed_limiter = Arc::new(Semaphore::new(permits));
        self
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    /// Generates text for `prompt`, consulting the cache first, and records
    /// the call in `log`.
    pub fn generate(
        &self,
        model: &Model,
        prompt: &str,
        params: &SamplingParams,
        attempt_index: u32,
        log: &CallLog,
    ) -> Result<String, ProviderError> {
        let call = self
            .cache
            .cached_generate(model, prompt, params, attempt_index, &self.retry)?;
        log.record(&call);
        if call.response.trim().is_empty() {
            return Err(ProviderError::EmptyResponse);
        }
        Ok(call.response)
    }

    /// Embeds `text`. Blank text yields a zero vector flagged degenerate.
    pub fn embed(&self, text: &str) -> Result<Embedding, ProviderError> {
        if text.trim().is_empty() {
            let dim = self.embed_dim.get().copied().unwrap_or(1);
            return Ok(Embedding {
                vector: vec![0.0; dim],
                degenerate: true,
            });
        }
        let spec = CallSpec {
            kind: CallKind::Embed,
            provider_id: self.embedder.provider_id(),
            model_name: self.embedder.model_name(),
            prompt: text,
            params: None,
            attempt_index: 0,
        };
        let call = self.cache.get_or_compute(&spec, || {
            let vector = self.retry.run(|| {
                let _permit = self.embed_limiter.acquire();
                self.embedder.embed(text)
            })?;
            serde_json::to_string(&vector).map_err(|e| ProviderError::Malformed(e.to_string()))
        })?;
        let vector: Vec<f64> = serde_json::from_str(&call.response)
            .map_err(|e| ProviderError::Malformed(format!("cached embedding: {e}")))?;
        if vector.is_empty() || vector.iter().any(|v| !v.is_finite()) {
            return Err(ProviderError::Malformed("embedding has no finite entries".into()));
        }
        let expected = *self.embed_dim.get_or_init(|| vector.len());
        if expected != vector.len() {
            return Err(ProviderError::DimensionDrift {
                expected,
                actual: vector.len(),
            });
        }
        let degenerate = vector.iter().all(|v| *v == 0.0);
        Ok(Embedding { vector, degenerate })
    }

    /// Case-folded, deduplicated entity surface forms. Provider failures
    /// degrade to the empty set.
    pub fn entities(&self, text: &str) -> BTreeSet<String> {
        let spec = CallSpec {
            kind: CallKind::Ner,
            provider_id: self.tagger.provider_id(),
            model_name: self.tagger.model_name(),
            prompt: text,
            params: None,
            attempt_index: 0,
        };
        let result = self.cache.get_or_compute(&spec, || {
            let found = self.retry.run(|| {
                let _permit = self.embed_limiter.acquire();
                self.tagger.entities(text)
            })?;
            serde_json::to_string(&found).map_err(|e| ProviderError::Malformed(e.to_string()))
        });
        let decoded = result.and_then(|call| {
            serde_json::from_str(&call.response).map_err(|e| ProviderError::Malformed(e.to_string()))
        });
        let raw: Vec<String> = match decoded {
            Ok(v) => v,
            Err(e) => {
                log::warn!("entity extraction failed, treating as no entities: {e}");
                Vec::new()
            }
        };
        normalize_entities(raw)
    }

    /// Checks both chat models answer before a run starts.
    pub fn probe(&self) -> Result<(), ProviderError> {
        self.target.probe()?;
        self.judge.probe()
    }
}

pub(crate) fn normalize_entities(raw: impl IntoIterator<Item = String>) -> BTreeSet<String> {
    raw.into_iter()
        .map(|e| e.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase())
        .filter(|e| !e.is_empty())
        .collect()
}

pub(crate) fn elapsed_ms(start: Instant) -> u64 {
    start.elapsed().as_millis().min(u128::from(u64::MAX)) as u64
}
