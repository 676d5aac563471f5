//! Per-item evaluation and dataset runs.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{faithfulness_score, lext, plausibility_score, AggregationOrder, DatasetAggregate};
use crate::config::RunConfig;
use crate::context::{EvalContext, MetricSettings};
use crate::dataset::load_items;
use crate::error::{Error, Result};
use crate::faithfulness::{contextual_faithfulness, counterfactual_stability, generate_probe_questions, qag_score};
use crate::parsing::parse_prediction;
use crate::plausibility::{
    accuracy, answer_prompt, consistency, context_relevancy, iterative_stability, paraphrase_robustness,
    select_correctness,
};
use crate::prompts::PromptRegistry;
use crate::providers::{CallLog, Providers};
use crate::types::{EvalItem, MetricVector, ScoreCard, METRIC_NAMES};

/// Everything needed to score items.
pub struct Evaluator {
    pub providers: Providers,
    pub prompts: PromptRegistry,
    pub settings: MetricSettings,
}

struct Recorder {
    missing: BTreeMap<String, String>,
}

impl Recorder {
    fn take(&mut self, name: &str, outcome: Result<f64>) -> Option<f64> {
        match outcome {
            Ok(v) => Some(v),
            Err(e) => {
                self.missing.insert(name.to_string(), e.to_string());
                None
            }
        }
    }

    fn require(&mut self, name: &str, value: Option<f64>, why: &str) -> Option<f64> {
        if value.is_none() {
            self.missing.entry(name.to_string()).or_insert_with(|| why.to_string());
        }
        value
    }
}

impl Evaluator {
    pub fn new(providers: Providers, prompts: PromptRegistry, settings: MetricSettings) -> Self {
        Evaluator {
            providers,
            prompts,
            settings,
        }
    }

    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        Ok(Evaluator::new(cfg.build_providers()?, cfg.prompts()?, cfg.metrics.clone()))
    }

    /// Scores one item. Provider failures leave the affected metrics
    /// missing rather than failing the item.
    pub fn evaluate_item(&self, item: &EvalItem) -> ScoreCard {
        let log = CallLog::new();
        let ctx = EvalContext {
            providers: &self.providers,
            prompts: &self.prompts,
            settings: &self.settings,
            log: &log,
        };
        let mut m = MetricVector::default();
        let mut rec = Recorder {
            missing: BTreeMap::new(),
        };

        let base = answer_prompt(&self.prompts, item, &item.question)
            .and_then(|p| Ok(ctx.target_answer(&p, 0)?))
            .map(|raw| parse_prediction(&raw, item.dataset_kind));
        let base = match base {
            Ok(b) => b,
            Err(e) => {
                let why = format!("no base prediction: {e}");
                for name in METRIC_NAMES {
                    rec.missing.insert(name.to_string(), why.clone());
                }
                return ScoreCard {
                    item_id: item.id.clone(),
                    metrics: m,
                    plausibility: None,
                    faithfulness: None,
                    lext: None,
                    audit: log.snapshot(),
                    missing: rec.missing,
                };
            }
        };

        let ground = ctx.embed(&item.ground_explanation).map_err(Error::from);
        let (acc, weight) = match &ground {
            Ok(g) => {
                let (acc, overlap) = accuracy(&ctx, g, &item.ground_explanation, &base.explanation);
                (acc, overlap.weight)
            }
            Err(e) => (Err(Error::Skipped(format!("reference not embedded: {e}"))), 0.0),
        };
        m.accuracy = rec.take("accuracy", acc);
        m.context_relevancy = rec.take("context_relevancy", context_relevancy(&ctx, item, &base.explanation));
        m.correctness = rec.require(
            "correctness",
            select_correctness(weight, m.accuracy, m.context_relevancy),
            "selected component is missing",
        );

        let (iter, para) = match &ground {
            Ok(g) => (
                iterative_stability(&ctx, item, g, &base),
                paraphrase_robustness(&ctx, item, g),
            ),
            Err(e) => (
                Err(Error::Skipped(format!("reference not embedded: {e}"))),
                Err(Error::Skipped(format!("reference not embedded: {e}"))),
            ),
        };
        m.iter_stability = rec.take("iter_stability", iter);
        m.para_stability = rec.take("para_stability", para);
        m.consistency = rec.require(
            "consistency",
            consistency(m.iter_stability, m.para_stability),
            "both stability metrics are missing",
        );

        let questions = generate_probe_questions(&ctx, &base.explanation);
        let n_qag = questions.as_ref().map_or(0, Vec::len);
        let qag = questions.and_then(|qs| qag_score(&ctx, &base.explanation, &qs));
        m.qag = rec.take("qag", qag);
        m.counterfactual = rec.take(
            "counterfactual",
            counterfactual_stability(&ctx, item, &base).map(|r| r.normalized),
        );
        m.contextual_faithfulness = rec.take(
            "contextual_faithfulness",
            contextual_faithfulness(&ctx, item, &base).map(|r| r.score),
        );

        let plausibility = plausibility_score(m.correctness, m.consistency);
        let faithfulness = faithfulness_score(m.qag, m.counterfactual, m.contextual_faithfulness);
        let t = match (plausibility, faithfulness) {
            (Some(p), Some(f)) => lext(p, f).ok(),
            _ => None,
        };
        let audit = log.snapshot();
        if audit.len() > self.settings.call_budget(n_qag) {
            log::warn!("{}: {} generation calls exceeds the budget", item.id, audit.len());
        }
        ScoreCard {
            item_id: item.id.clone(),
            metrics: m,
            plausibility,
            faithfulness,
            lext: t,
            audit,
            missing: rec.missing,
        }
    }

    /// Scores `items` with at most `parallelism` in flight, preserving order.
    pub fn evaluate_items(&self, items: &[EvalItem], parallelism: usize) -> Result<Vec<ScoreCard>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(pool.install(|| items.par_iter().map(|it| self.evaluate_item(it)).collect()))
    }
}

/// Result of one dataset run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub model: String,
    pub dataset: String,
    pub scorecards: Vec<ScoreCard>,
    pub aggregate: DatasetAggregate,
    pub degraded: bool,
    pub config: serde_json::Value,
}

impl RunSummary {
    pub fn new(
        model: impl Into<String>,
        dataset: impl Into<String>,
        scorecards: Vec<ScoreCard>,
        order: AggregationOrder,
        config: serde_json::Value,
    ) -> Self {
        let aggregate = DatasetAggregate::from_scorecards(&scorecards, order);
        RunSummary {
            model: model.into(),
            dataset: dataset.into(),
            degraded: aggregate.is_degraded(),
            scorecards,
            aggregate,
            config,
        }
    }

    /// Generation calls issued across all items.
    pub fn generation_calls(&self) -> usize {
        self.scorecards.iter().map(|c| c.audit.len()).sum()
    }
}

/// Loads the configured dataset, probes providers, and scores every item.
pub fn evaluate_dataset(cfg: &RunConfig) -> Result<RunSummary> {
    let mut items = load_items(&cfg.dataset.path, cfg.dataset.kind)?;
    if let Some(limit) = cfg.run.limit {
        items.truncate(limit);
    }
    if items.is_empty() {
        return Err(Error::Dataset("no items to evaluate".into()));
    }
    let evaluator = Evaluator::from_config(cfg)?;
    if !cfg.run.offline {
        evaluator.providers.probe()?;
    }
    let cards = evaluator.evaluate_items(&items, cfg.run.item_parallelism)?;
    let summary = RunSummary::new(
        cfg.target.model_name.clone(),
        cfg.dataset_name(),
        cards,
        cfg.run.aggregation_order,
        cfg.snapshot(),
    );
    if summary.degraded {
        log::warn!(
            "run degraded: {} of {} items have no trust score",
            summary.aggregate.lext_missing,
            summary.aggregate.items
        );
    }
    Ok(summary)
}
