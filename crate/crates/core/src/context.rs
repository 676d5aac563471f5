//! Per-item handle bundling providers, prompts, settings, and the call log.

use serde::{Deserialize, Serialize};

use crate::error::ProviderError;
use crate::prompts::PromptRegistry;
use crate::providers::{CallLog, Embedding, Providers, SamplingParams};

/// How the sequential redaction phase builds its five probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RedactionMode {
    /// Probe `i` redacts keyword `i` only.
    #[default]
    RemoveOne,
    /// Probe `i` redacts every keyword except `i`.
    AddBack,
}

impl RedactionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RedactionMode::RemoveOne => "remove-one",
            RedactionMode::AddBack => "add-back",
        }
    }
}

impl std::str::FromStr for RedactionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "remove-one" => Ok(RedactionMode::RemoveOne),
            "add-back" => Ok(RedactionMode::AddBack),
            other => Err(format!("unknown redaction mode `{other}` (expected remove-one or add-back)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricSettings {
    pub beta: f64,
    pub iterations: u32,
    pub paraphrases: u32,
    pub qag_min_questions: usize,
    pub keywords_n: usize,
    pub redaction_mode: RedactionMode,
    /// Sampling temperature for the target's answer generations.
    pub target_temperature: f64,
    pub max_tokens: u32,
    pub seed: u64,
}

impl Default for MetricSettings {
    fn default() -> Self {
        MetricSettings {
            beta: 0.2,
            iterations: 5,
            paraphrases: 3,
            qag_min_questions: 5,
            keywords_n: 5,
            redaction_mode: RedactionMode::RemoveOne,
            target_temperature: 0.7,
            max_tokens: 512,
            seed: 42,
        }
    }
}

impl MetricSettings {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(format!("beta must be positive, got {}", self.beta));
        }
        if self.iterations < 2 {
            return Err(format!("iterations must be at least 2, got {}", self.iterations));
        }
        if self.paraphrases < 2 {
            return Err(format!("paraphrases must be at least 2, got {}", self.paraphrases));
        }
        if self.keywords_n == 0 {
            return Err("keywords_n must be at least 1".into());
        }
        if self.qag_min_questions == 0 {
            return Err("qag_min_questions must be at least 1".into());
        }
        if !(self.target_temperature >= 0.0 && self.target_temperature.is_finite()) {
            return Err(format!("temperature must be >= 0, got {}", self.target_temperature));
        }
        if self.max_tokens == 0 {
            return Err("max_tokens must be positive".into());
        }
        Ok(())
    }

    /// Sampling for the target's `attempt`-th answer generation.
    pub fn answer_params(&self, attempt: u32) -> SamplingParams {
        SamplingParams {
            temperature: self.target_temperature,
            max_tokens: self.max_tokens,
            seed: Some(self.seed + u64::from(attempt)),
        }
    }

    /// Sampling for target probes and every judge call.
    pub fn deterministic_params(&self) -> SamplingParams {
        SamplingParams::deterministic(self.max_tokens, self.seed)
    }

    /// Upper bound on generation calls for one item when the judge
    /// generates `n_qag` questions.
    pub fn call_budget(&self, n_qag: usize) -> usize {
        let k_iter = self.iterations as usize;
        let k_para = self.paraphrases as usize;
        let kw = self.keywords_n;
        1 + (k_iter - 1)
            + 2 * k_para
            + 1
            + (1 + 2 * n_qag)
            + 3
            + (1 + 2 + 2 * kw)
    }
}

pub struct EvalContext<'a> {
    pub providers: &'a Providers,
    pub prompts: &'a PromptRegistry,
    pub settings: &'a MetricSettings,
    pub log: &'a CallLog,
}

impl EvalContext<'_> {
    pub fn judge(&self, prompt: &str, attempt: u32) -> Result<String, ProviderError> {
        let params = self.settings.deterministic_params();
        self.providers
            .generate(&self.providers.judge, prompt, &params, attempt, self.log)
    }

    /// A target call that should be as repeatable as possible.
    pub fn target_probe(&self, prompt: &str) -> Result<String, ProviderError> {
        let params = self.settings.deterministic_params();
        self.providers
            .generate(&self.providers.target, prompt, &params, 0, self.log)
    }

    /// The `attempt`-th sampled answer to `prompt`.
    pub fn target_answer(&self, prompt: &str, attempt: u32) -> Result<String, ProviderError> {
        let params = self.settings.answer_params(attempt);
        self.providers
            .generate(&self.providers.target, prompt, &params, attempt, self.log)
    }

    pub fn embed(&self, text: &str) -> Result<Embedding, ProviderError> {
        self.providers.embed(text)
    }
}
