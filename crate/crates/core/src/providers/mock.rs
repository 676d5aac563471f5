//! Deterministic, network-free providers.
//!
//! These exist so that whole runs (including the acceptance suite) can be
//! replayed byte-for-byte without any endpoint.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{EntityTagger, GenerationRequest, ModelRef, TextEmbedder, TextGenerator};
use crate::error::{Error, ProviderError};
use crate::text::{phrase_segments, word_tokens};

const DEFAULT_TERMS: &str = include_str!("../../fixtures/medical_terms.txt");

/// Hex SHA-256 of a prompt; the key scripted replies are stored under.
pub fn prompt_digest(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Replies with the prompt itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoGenerator;

impl TextGenerator for EchoGenerator {
    fn generate(&self, _: &ModelRef, request: &GenerationRequest<'_>) -> Result<String, ProviderError> {
        Ok(request.prompt.to_string())
    }

    fn probe(&self, _: &ModelRef) -> Result<(), ProviderError> {
        Ok(())
    }
}

/// Fixture lookup keyed on prompt digest. A prompt may carry several
/// replies; attempt `i` gets reply `i`, repeating the last one past the end.
#[derive(Debug, Clone, Default)]
pub struct ScriptedGenerator {
    replies: HashMap<String, Vec<String>>,
    fallback: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScriptEntry {
    One(String),
    Many(Vec<String>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptFile {
    #[serde(default)]
    replies: HashMap<String, ScriptEntry>,
    #[serde(default)]
    prompts: HashMap<String, ScriptEntry>,
    #[serde(default)]
    fallback: Option<String>,
}

impl ScriptedGenerator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_fallback(mut self, reply: impl Into<String>) -> Self {
        self.fallback = Some(reply.into());
        self
    }

    /// Scripts `replies` for the literal `prompt`.
    pub fn insert_prompt(&mut self, prompt: &str, replies: Vec<String>) {
        self.replies.insert(prompt_digest(prompt), replies);
    }

    pub fn insert_digest(&mut self, digest: &str, replies: Vec<String>) {
        self.replies.insert(digest.to_ascii_lowercase(), replies);
    }

    pub fn len(&self) -> usize {
        self.replies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replies.is_empty()
    }

    /// Parses `{"replies": {digest: reply|[replies]}, "prompts": {prompt: ...}, "fallback": ...}`.
    pub fn from_json_str(src: &str) -> Result<Self, Error> {
        let file: ScriptFile = serde_json::from_str(src)?;
        let mut out = ScriptedGenerator {
            fallback: file.fallback,
            ..Self::default()
        };
        let flatten = |e: ScriptEntry| match e {
            ScriptEntry::One(s) => vec![s],
            ScriptEntry::Many(v) => v,
        };
        for (digest, entry) in file.replies {
            let replies = flatten(entry);
            if replies.is_empty() {
                return Err(Error::Config(format!("empty reply list for digest {digest}")));
            }
            out.insert_digest(&digest, replies);
        }
        for (prompt, entry) in file.prompts {
            let replies = flatten(entry);
            if replies.is_empty() {
                return Err(Error::Config("empty reply list for scripted prompt".into()));
            }
            out.insert_prompt(&prompt, replies);
        }
        Ok(out)
    }

    pub fn from_json_file(path: &Path) -> Result<Self, Error> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&src)
    }

    fn lookup(&self, prompt: &str, attempt: u32) -> Option<&str> {
        let replies = self.replies.get(&prompt_digest(prompt))?;
        let idx = (attempt as usize).min(replies.len() - 1);
        Some(replies[idx].as_str())
    }
}

impl TextGenerator for ScriptedGenerator {
    fn generate(&self, _: &ModelRef, request: &GenerationRequest<'_>) -> Result<String, ProviderError> {
        self.lookup(request.prompt, request.attempt_index)
            .or(self.fallback.as_deref())
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Unscripted(prompt_digest(request.prompt)))
    }

    fn probe(&self, _: &ModelRef) -> Result<(), ProviderError> {
        Ok(())
    }
}

/// Order-free bag-of-words embedding: each token adds 1 to a hashed bucket.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
    model_name: String,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        let dim = dim.max(1);
        HashingEmbedder {
            dim,
            model_name: format!("hashing-bow-{dim}"),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for token in word_tokens(text) {
            let h = Sha256::digest(token.as_bytes());
            let bucket = u64::from_le_bytes(h[..8].try_into().expect("8 bytes"));
            v[(bucket % self.dim as u64) as usize] += 1.0;
        }
        v
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(256)
    }
}

impl TextEmbedder for HashingEmbedder {
    fn provider_id(&self) -> &str {
        "mock"
    }

    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        Ok(self.vector(text))
    }
}

/// Returns fixed vectors for known texts and falls back to hashing otherwise.
#[derive(Debug, Clone)]
pub struct ScriptedEmbedder {
    table: HashMap<String, Vec<f64>>,
    fallback: HashingEmbedder,
    model_name: String,
}

impl ScriptedEmbedder {
    pub fn new(dim: usize, model_name: impl Into<String>) -> Self {
        ScriptedEmbedder {
            table: HashMap::new(),
            fallback: HashingEmbedder::new(dim),
            model_name: model_name.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.fallback.dim()
    }

    pub fn insert(&mut self, text: &str, vector: Vec<f64>) -> Result<(), Error> {
        if vector.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "scripted vector has dimension {}, expected {}",
                vector.len(),
                self.dim()
            )));
        }
        self.table.insert(text.trim().to_string(), vector);
        Ok(())
    }
}

impl TextEmbedder for ScriptedEmbedder {
    fn provider_id(&self) -> &str {
        "mock"
    }

    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        Ok(self
            .table
            .get(text.trim())
            .cloned()
            .unwrap_or_else(|| self.fallback.vector(text)))
    }
}

/// Keyword-dictionary tagger: reports every dictionary term occurring as a
/// contiguous, whole-word phrase within one clause of the text.
#[derive(Debug, Clone)]
pub struct DictionaryTagger {
    terms: Vec<Vec<String>>,
    model_name: String,
}

impl DictionaryTagger {
    pub fn new<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut seen = BTreeSet::new();
        let terms = terms
            .into_iter()
            .map(|t| word_tokens(t.as_ref()))
            .filter(|t| !t.is_empty())
            .filter(|t| seen.insert(t.clone()))
            .collect();
        DictionaryTagger {
            terms,
            model_name: "keyword-dictionary".into(),
        }
    }

    /// The bundled list of common clinical terms.
    pub fn medical() -> Self {
        Self::from_term_list(DEFAULT_TERMS)
    }

    /// One term per line; blank lines and `#` comments are skipped.
    pub fn from_term_list(src: &str) -> Self {
        Self::new(
            src.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn tag(&self, text: &str) -> BTreeSet<String> {
        let segments = phrase_segments(text);
        self.terms
            .iter()
            .filter(|term| {
                segments
                    .iter()
                    .any(|seg| seg.windows(term.len()).any(|w| w == term.as_slice()))
            })
            .map(|term| term.join(" "))
            .collect()
    }
}

impl EntityTagger for DictionaryTagger {
    fn provider_id(&self) -> &str {
        "mock"
    }

    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn entities(&self, text: &str) -> Result<Vec<String>, ProviderError> {
        Ok(self.tag(text).into_iter().collect())
    }
}
