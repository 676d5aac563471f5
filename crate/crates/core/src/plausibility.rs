//! Correctness (accuracy, context relevancy) and consistency (iterative and
//! paraphrase stability).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::context::EvalContext;
use crate::error::{Error, Result};
use crate::parsing::parse_prediction;
use crate::prompts::{PromptRegistry, TemplateId};
use crate::providers::Embedding;
use crate::similarity::{clamp01, cosine_similarity, mean, population_variance};
use crate::types::{DatasetKind, EvalItem, PredictedAnswer};

/// Overlap between reference and predicted entity sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NerOverlap {
    pub gt_tags: BTreeSet<String>,
    pub pred_tags: BTreeSet<String>,
    pub fraction: f64,
    pub weight: f64,
    pub beta: f64,
}

/// `fraction = |gt ∩ pred| / |pred|`, `weight = fraction^beta` (0 when the
/// prediction has no entities or none overlap).
pub fn ner_weight(gt_tags: &BTreeSet<String>, pred_tags: &BTreeSet<String>, beta: f64) -> NerOverlap {
    let fraction = if pred_tags.is_empty() {
        0.0
    } else {
        gt_tags.intersection(pred_tags).count() as f64 / pred_tags.len() as f64
    };
    let weight = if fraction > 0.0 { fraction.powf(beta) } else { 0.0 };
    NerOverlap {
        gt_tags: gt_tags.clone(),
        pred_tags: pred_tags.clone(),
        fraction,
        weight,
        beta,
    }
}

/// Clamped similarity scaled by the entity weight.
pub fn weighted_accuracy(cosine: f64, weight: f64) -> f64 {
    clamp01(cosine) * weight
}

/// Clamped cosine between two embeddings; degenerate inputs score 0.
pub fn embedding_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.degenerate || b.degenerate {
        return Ok(0.0);
    }
    match cosine_similarity(&a.vector, &b.vector) {
        Ok(c) => Ok(clamp01(c)),
        Err(Error::DegenerateVector(_)) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// 1 minus the population variance of the clamped similarities.
pub fn stability(similarities: &[f64]) -> Result<f64> {
    let clamped: Vec<f64> = similarities.iter().copied().map(clamp01).collect();
    Ok(1.0 - population_variance(&clamped)?)
}

/// Accuracy if the entity weight is positive, otherwise context relevancy.
pub fn select_correctness(weight: f64, accuracy: Option<f64>, relevancy: Option<f64>) -> Option<f64> {
    if weight > 0.0 {
        accuracy
    } else {
        relevancy
    }
}

/// Mean of whichever stability scores are present.
pub fn consistency(iter: Option<f64>, para: Option<f64>) -> Option<f64> {
    let present: Vec<f64> = [iter, para].into_iter().flatten().collect();
    mean(&present)
}

/// The answer prompt for `item`, with `question` in place of the item's own.
pub fn answer_prompt(prompts: &PromptRegistry, item: &EvalItem, question: &str) -> Result<String> {
    match item.dataset_kind {
        DatasetKind::Qpain => prompts.render(
            TemplateId::QpainAnswer,
            &[("Vignette", &item.context), ("Question", question)],
        ),
        DatasetKind::Pubmedqa | DatasetKind::Custom => prompts.render(
            TemplateId::PubmedqaAnswer,
            &[("context", &item.context), ("question", question)],
        ),
    }
}

/// Accuracy of `pred_expl` against the reference explanation.
pub fn accuracy(
    ctx: &EvalContext<'_>,
    ground: &Embedding,
    ground_expl: &str,
    pred_expl: &str,
) -> (Result<f64>, NerOverlap) {
    let gt_tags = ctx.providers.entities(ground_expl);
    let pred_tags = if pred_expl.trim().is_empty() {
        BTreeSet::new()
    } else {
        ctx.providers.entities(pred_expl)
    };
    let overlap = ner_weight(&gt_tags, &pred_tags, ctx.settings.beta);
    let acc = ctx
        .embed(pred_expl)
        .map_err(Error::from)
        .and_then(|pred| embedding_similarity(ground, &pred))
        .map(|cos| weighted_accuracy(cos, overlap.weight));
    (acc, overlap)
}

/// Similarity between the item's question and a question the judge writes
/// from the predicted explanation.
pub fn context_relevancy(ctx: &EvalContext<'_>, item: &EvalItem, pred_expl: &str) -> Result<f64> {
    if pred_expl.trim().is_empty() {
        return Ok(0.0);
    }
    let prompt = ctx
        .prompts
        .render(TemplateId::ContextrelQuestionGen, &[("explanation", pred_expl)])?;
    let generated = ctx.judge(&prompt, 0)?;
    let a = ctx.embed(generated.trim())?;
    let b = ctx.embed(&item.question)?;
    embedding_similarity(&a, &b)
}

/// Stability of the explanation across `iterations` samples of the same
/// prompt. `base` is reused as sample 0.
pub fn iterative_stability(
    ctx: &EvalContext<'_>,
    item: &EvalItem,
    ground: &Embedding,
    base: &PredictedAnswer,
) -> Result<f64> {
    let prompt = answer_prompt(ctx.prompts, item, &item.question)?;
    let mut sims = Vec::new();
    match ctx.embed(&base.explanation) {
        Ok(e) => sims.push(embedding_similarity(ground, &e)?),
        Err(e) => log::warn!("{}: base explanation not embedded: {e}", item.id),
    }
    for attempt in 1..ctx.settings.iterations {
        let sim = ctx
            .target_answer(&prompt, attempt)
            .map(|raw| parse_prediction(&raw, item.dataset_kind).explanation)
            .and_then(|expl| ctx.embed(&expl));
        match sim {
            Ok(e) => sims.push(embedding_similarity(ground, &e)?),
            Err(e) => log::warn!("{}: iteration {attempt} dropped: {e}", item.id),
        }
    }
    if sims.len() < 2 {
        return Err(Error::Skipped(format!(
            "only {} usable iteration(s)",
            sims.len()
        )));
    }
    stability(&sims)
}

fn clean_paraphrase(reply: &str) -> &str {
    reply.trim().trim_matches(['"', '\u{201c}', '\u{201d}']).trim()
}

/// Stability of the explanation when the question is reworded.
pub fn paraphrase_robustness(ctx: &EvalContext<'_>, item: &EvalItem, ground: &Embedding) -> Result<f64> {
    let count = ctx.settings.paraphrases;
    let count_s = count.to_string();
    let mut sims = Vec::new();
    for index in 1..=count {
        let index_s = index.to_string();
        let gen = ctx.prompts.render(
            TemplateId::ParaphraseGen,
            &[("question", &item.question), ("index", &index_s), ("count", &count_s)],
        )?;
        let outcome = ctx.judge(&gen, 0).map_err(Error::from).and_then(|reply| {
            let prompt = answer_prompt(ctx.prompts, item, clean_paraphrase(&reply))?;
            let raw = ctx.target_answer(&prompt, 0)?;
            let expl = parse_prediction(&raw, item.dataset_kind).explanation;
            let emb = ctx.embed(&expl)?;
            embedding_similarity(ground, &emb)
        });
        match outcome {
            Ok(s) => sims.push(s),
            Err(e) => log::warn!("{}: paraphrase {index} dropped: {e}", item.id),
        }
    }
    if sims.len() < 2 {
        return Err(Error::Skipped(format!(
            "only {} usable paraphrase(s)",
            sims.len()
        )));
    }
    stability(&sims)
}
