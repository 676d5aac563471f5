//! Run configuration, loaded from TOML or JSON.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::aggregation::AggregationOrder;
use crate::cache::ResponseCache;
use crate::context::MetricSettings;
use crate::error::{Error, Result};
use crate::prompts::PromptRegistry;
use crate::providers::http::{HttpNer, OpenAiChat, OpenAiEmbeddings};
use crate::providers::mock::{DictionaryTagger, EchoGenerator, HashingEmbedder, ScriptedGenerator};
use crate::providers::{EntityTagger, Model, ModelRef, Providers, Role, TextEmbedder, TextGenerator};
use crate::types::DatasetKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    #[default]
    Http,
    Echo,
    Scripted,
}

fn default_concurrency() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub provider_id: String,
    pub model_name: String,
    pub endpoint_url: String,
    #[serde(default)]
    pub api_key_env: String,
    #[serde(default)]
    pub backend: GeneratorKind,
    /// Reply script for the scripted backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
}

impl ModelConfig {
    pub fn model_ref(&self, role: Role) -> ModelRef {
        ModelRef {
            provider_id: self.provider_id.clone(),
            model_name: self.model_name.clone(),
            endpoint_url: self.endpoint_url.clone(),
            api_key_env: self.api_key_env.clone(),
            role,
        }
    }

    fn validate(&self, section: &str) -> Result<()> {
        self.model_ref(Role::Target)
            .validate()
            .map_err(|e| Error::Config(format!("[{section}] {e}")))?;
        if self.backend == GeneratorKind::Scripted && self.script.is_none() {
            return Err(Error::Config(format!("[{section}] backend = \"scripted\" needs `script`")));
        }
        if self.concurrency == 0 {
            return Err(Error::Config(format!("[{section}] concurrency must be at least 1")));
        }
        Ok(())
    }

    fn build(&self, role: Role) -> Result<Model> {
        let backend: Arc<dyn TextGenerator> = match self.backend {
            GeneratorKind::Http => Arc::new(OpenAiChat::new()),
            GeneratorKind::Echo => Arc::new(EchoGenerator),
            GeneratorKind::Scripted => {
                let path = self.script.as_ref().expect("validated");
                Arc::new(ScriptedGenerator::from_json_file(path)?)
            }
        };
        Ok(Model::standalone(self.model_ref(role), backend, self.concurrency))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    #[default]
    Http,
    Hashing,
}

fn default_dim() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    #[serde(default)]
    pub kind: EmbeddingKind,
    #[serde(default)]
    pub provider_id: String,
    #[serde(default)]
    pub model_name: String,
    #[serde(default)]
    pub endpoint_url: String,
    #[serde(default)]
    pub api_key_env: String,
    /// Vector size of the hashing embedder.
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NerKind {
    #[default]
    Http,
    Dictionary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NerConfig {
    #[serde(default)]
    pub kind: NerKind,
    #[serde(default)]
    pub provider_id: String,
    #[serde(default)]
    pub model_name: String,
    #[serde(default)]
    pub endpoint_url: String,
    #[serde(default)]
    pub api_key_env: String,
    /// Term list for the dictionary tagger; the bundled list when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<PathBuf>,
}

fn check_endpoint(section: &str, url: &str, provider_id: &str, model_name: &str) -> Result<()> {
    if provider_id.is_empty() || model_name.is_empty() {
        return Err(Error::Config(format!(
            "[{section}] http backend needs `provider_id` and `model_name`"
        )));
    }
    url::Url::parse(url).map_err(|e| Error::Config(format!("[{section}] endpoint_url `{url}`: {e}")))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub kind: DatasetKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSettings {
    pub cache_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub offline: bool,
    pub limit: Option<usize>,
    pub aggregation_order: AggregationOrder,
    /// Items evaluated concurrently.
    pub item_parallelism: usize,
    pub prompt_overrides: Option<PathBuf>,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            cache_dir: None,
            out_dir: PathBuf::from("lext-out"),
            offline: false,
            limit: None,
            aggregation_order: AggregationOrder::PerItem,
            item_parallelism: 4,
            prompt_overrides: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub target: ModelConfig,
    pub judge: ModelConfig,
    pub embedding: EmbeddingConfig,
    pub ner: NerConfig,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub metrics: MetricSettings,
    #[serde(default)]
    pub run: RunSettings,
}

impl RunConfig {
    /// Parses TOML, or JSON when `path` ends in `.json`. Relative paths in
    /// the file are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut cfg = if is_json {
            Self::from_json_str(&src)?
        } else {
            Self::from_toml_str(&src)?
        };
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn from_toml_str(src: &str) -> Result<Self> {
        toml::from_str(src).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json_str(src: &str) -> Result<Self> {
        serde_json::from_str(src).map_err(|e| Error::Config(e.to_string()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset.path);
        fix(&mut self.run.out_dir);
        for p in [
            self.target.script.as_mut(),
            self.judge.script.as_mut(),
            self.ner.terms.as_mut(),
            self.run.cache_dir.as_mut(),
            self.run.prompt_overrides.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.target.validate("target")?;
        self.judge.validate("judge")?;
        if self.embedding.kind == EmbeddingKind::Http {
            check_endpoint(
                "embedding",
                &self.embedding.endpoint_url,
                &self.embedding.provider_id,
                &self.embedding.model_name,
            )?;
        }
        if self.embedding.dim == 0 || self.embedding.concurrency == 0 {
            return Err(Error::Config("[embedding] dim and concurrency must be positive".into()));
        }
        if self.ner.kind == NerKind::Http {
            check_endpoint("ner", &self.ner.endpoint_url, &self.ner.provider_id, &self.ner.model_name)?;
        }
        self.metrics
            .validate()
            .map_err(|e| Error::Config(format!("[metrics] {e}")))?;
        if self.run.item_parallelism == 0 {
            return Err(Error::Config("[run] item_parallelism must be at least 1".into()));
        }
        Ok(())
    }

    pub fn prompts(&self) -> Result<PromptRegistry> {
        match &self.run.prompt_overrides {
            Some(path) => PromptRegistry::new().with_overrides_file(path),
            None => Ok(PromptRegistry::new()),
        }
    }

    pub fn cache(&self) -> ResponseCache {
        let cache = match &self.run.cache_dir {
            Some(dir) => ResponseCache::on_disk(dir),
            None => ResponseCache::in_memory(),
        };
        cache.offline(self.run.offline)
    }

    pub fn build_providers(&self) -> Result<Providers> {
        self.validate()?;
        let target = self.target.build(Role::Target)?;
        let judge = self.judge.build(Role::Judge)?;
        let e = &self.embedding;
        let embedder: Arc<dyn TextEmbedder> = match e.kind {
            EmbeddingKind::Http => Arc::new(OpenAiEmbeddings::new(
                &e.provider_id,
                &e.model_name,
                &e.endpoint_url,
                &e.api_key_env,
            )),
            EmbeddingKind::Hashing => Arc::new(HashingEmbedder::new(e.dim)),
        };
        let n = &self.ner;
        let tagger: Arc<dyn EntityTagger> = match (n.kind, &n.terms) {
            (NerKind::Http, _) => Arc::new(HttpNer::new(
                &n.provider_id,
                &n.model_name,
                &n.endpoint_url,
                &n.api_key_env,
            )),
            (NerKind::Dictionary, Some(path)) => {
                let src = std::fs::read_to_string(path).map_err(|err| Error::io(path, err))?;
                Arc::new(DictionaryTagger::from_term_list(&src))
            }
            (NerKind::Dictionary, None) => Arc::new(DictionaryTagger::medical()),
        };
        Ok(
            Providers::new(target, judge, embedder, tagger, Arc::new(self.cache()))
                .with_embedding_parallelism(e.concurrency),
        )
    }

    /// Everything that affects scores, without machine-specific paths.
    pub fn snapshot(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("run");
            obj.insert(
                "aggregation_order".into(),
                self.run.aggregation_order.as_str().into(),
            );
        }
        for section in ["target", "judge"] {
            if let Some(script) = v[section].get_mut("script") {
                *script = file_name(script.as_str());
            }
        }
        if let Some(terms) = v["ner"].get_mut("terms") {
            *terms = file_name(terms.as_str());
        }
        v["dataset"]["path"] = file_name(v["dataset"]["path"].as_str());
        v
    }

    /// Short dataset label used in reports.
    pub fn dataset_name(&self) -> String {
        self.dataset
            .path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.dataset.kind.to_string())
    }
}

fn file_name(p: Option<&str>) -> serde_json::Value {
    p.map(|p| {
        Path::new(p)
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    })
    .into()
}
