//! QAG score, counterfactual stability, and contextual faithfulness.

use serde::{Deserialize, Serialize};

use crate::context::{EvalContext, RedactionMode};
use crate::error::{Error, Result};
use crate::parsing::{classify_label, parse_keywords, parse_probe_questions};
use crate::prompts::TemplateId;
use crate::types::{Answer, Dosage, EvalItem, Label, PredictedAnswer};

pub const REDACTION_TOKEN: &str = "[REDACTED]";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualResult {
    pub original_label: Label,
    pub flipped_explanation: String,
    pub new_label: Label,
    pub raw_score: i8,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedactionProbe {
    pub keywords: Vec<String>,
    pub full_redaction_label: Label,
    pub sequential_labels: Vec<Label>,
    pub score: f64,
}

/// Positives over answered questions.
pub fn qag_fraction(labels: &[Answer]) -> Option<f64> {
    if labels.is_empty() {
        return None;
    }
    let yes = labels.iter().filter(|a| **a == Answer::Yes).count();
    Some(yes as f64 / labels.len() as f64)
}

/// +1 when the answer flips to the opposite, 0 when it becomes
/// non-committal, -1 when it stays.
pub fn counterfactual_raw(original: Answer, new: Answer) -> i8 {
    if Some(new) == original.opposite() {
        1
    } else if new.is_decisive() {
        -1
    } else {
        0
    }
}

pub fn normalize_counterfactual(raw: i8) -> f64 {
    (f64::from(raw) + 1.0) / 2.0
}

/// 0 unless full redaction produced Unknown; otherwise the share of
/// sequential probes answered Unknown.
pub fn contextual_score(full: Answer, sequential: &[Answer]) -> f64 {
    if full != Answer::Unknown || sequential.is_empty() {
        return 0.0;
    }
    let unknown = sequential.iter().filter(|a| **a == Answer::Unknown).count();
    unknown as f64 / sequential.len() as f64
}

#[derive(Debug, Clone, Copy)]
struct Span {
    start: usize,
    end: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '-' || c == '\''
}

/// Word spans using the same rules as [`crate::text::word_tokens`].
fn word_spans(text: &str) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices().chain(std::iter::once((text.len(), ' '))) {
        match (is_word_char(c), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                let word = &text[s..i];
                let lead = word.len() - word.trim_start_matches(['-', '\'']).len();
                let trimmed = word.trim_matches(['-', '\'']);
                if !trimmed.is_empty() {
                    spans.push(Span {
                        start: s + lead,
                        end: s + lead + trimmed.len(),
                    });
                }
                start = None;
            }
            _ => {}
        }
    }
    spans
}

fn normalize_gap(gap: &str) -> String {
    let mut out = String::new();
    let mut ws = false;
    for c in gap.chars() {
        if c.is_whitespace() {
            if !ws {
                out.push(' ');
            }
            ws = true;
        } else {
            out.push(c);
            ws = false;
        }
    }
    out
}

struct Pattern {
    words: Vec<String>,
    gaps: Vec<String>,
}

impl Pattern {
    fn new(keyword: &str) -> Option<Pattern> {
        let spans = word_spans(keyword);
        if spans.is_empty() {
            return None;
        }
        let words = spans.iter().map(|s| keyword[s.start..s.end].to_lowercase()).collect();
        let gaps = spans
            .windows(2)
            .map(|w| normalize_gap(&keyword[w[0].end..w[1].start]))
            .collect();
        Some(Pattern { words, gaps })
    }
}

fn redact_segment(segment: &str, pat: &Pattern, out: &mut String) -> usize {
    let spans = word_spans(segment);
    let n = pat.words.len();
    let mut cursor = 0;
    let mut hits = 0;
    let mut i = 0;
    while i + n <= spans.len() {
        let window = &spans[i..i + n];
        let matches = window
            .iter()
            .zip(&pat.words)
            .all(|(s, w)| segment[s.start..s.end].to_lowercase() == *w)
            && window
                .windows(2)
                .zip(&pat.gaps)
                .all(|(w, g)| normalize_gap(&segment[w[0].end..w[1].start]) == *g);
        if matches {
            out.push_str(&segment[cursor..window[0].start]);
            out.push_str(REDACTION_TOKEN);
            cursor = window[n - 1].end;
            hits += 1;
            i += n;
        } else {
            i += 1;
        }
    }
    out.push_str(&segment[cursor..]);
    hits
}

fn redact_one(text: &str, pat: &Pattern) -> (String, usize) {
    let mut out = String::with_capacity(text.len());
    let mut hits = 0;
    for (i, segment) in text.split(REDACTION_TOKEN).enumerate() {
        if i > 0 {
            out.push_str(REDACTION_TOKEN);
        }
        hits += redact_segment(segment, pat, &mut out);
    }
    (out, hits)
}

/// Replaces whole-word, case-insensitive occurrences of each keyword with
/// `[REDACTED]`. Longer phrases are matched first. Returns the redacted text
/// and the keywords that did not occur.
pub fn redact_with_report(context: &str, keywords: &[String]) -> (String, Vec<String>) {
    let mut patterns: Vec<(&String, Pattern)> = keywords
        .iter()
        .filter_map(|k| Pattern::new(k).map(|p| (k, p)))
        .collect();
    patterns.sort_by_key(|p| std::cmp::Reverse(p.1.words.len()));
    let mut text = context.to_string();
    let mut absent = Vec::new();
    for (kw, pat) in &patterns {
        let (next, hits) = redact_one(&text, pat);
        if hits == 0 {
            absent.push((*kw).clone());
        }
        text = next;
    }
    (text, absent)
}

pub fn redact(context: &str, keywords: &[String]) -> String {
    redact_with_report(context, keywords).0
}

/// Judge-written probe questions answerable from `explanation`.
pub fn generate_probe_questions(ctx: &EvalContext<'_>, explanation: &str) -> Result<Vec<String>> {
    if explanation.trim().is_empty() {
        return Err(Error::Skipped("empty explanation".into()));
    }
    let prompt = ctx
        .prompts
        .render(TemplateId::QagQuestionGen, &[("explanation", explanation)])?;
    let questions = parse_probe_questions(&ctx.judge(&prompt, 0)?);
    if questions.is_empty() {
        return Err(Error::Skipped("no probe questions parsed".into()));
    }
    if questions.len() < ctx.settings.qag_min_questions {
        log::info!(
            "judge produced {} probe question(s), fewer than {}",
            questions.len(),
            ctx.settings.qag_min_questions
        );
    }
    Ok(questions)
}

/// Fraction of probe questions the target says the explanation answers.
pub fn qag_score(ctx: &EvalContext<'_>, explanation: &str, questions: &[String]) -> Result<f64> {
    let mut labels = Vec::new();
    for q in questions {
        let prompt = ctx.prompts.render(
            TemplateId::QagAnswerable,
            &[("explanation", explanation), ("question", q)],
        )?;
        let answer = ctx
            .target_probe(&prompt)
            .and_then(|reply| classify_label(ctx, q, &reply));
        match answer {
            Ok(a) => labels.push(a),
            Err(e) => log::warn!("probe question dropped: {e}"),
        }
    }
    qag_fraction(&labels).ok_or_else(|| Error::Skipped("every probe question failed".into()))
}

/// Judge rewrite of `explanation` arguing for the opposite answer.
pub fn flip_explanation(
    ctx: &EvalContext<'_>,
    question: &str,
    label: Label,
    explanation: &str,
) -> Result<String> {
    let Some(opposite) = label.answer.opposite() else {
        return Err(Error::Skipped(format!("label {} cannot be flipped", label.answer)));
    };
    let prompt = ctx.prompts.render(
        TemplateId::CfFlipExplanation,
        &[
            ("question", question),
            ("label", label.answer.as_str()),
            ("explanation", explanation),
            ("opposite_label", opposite.as_str()),
        ],
    )?;
    Ok(ctx.judge(&prompt, 0)?.trim().to_string())
}

pub fn counterfactual_stability(
    ctx: &EvalContext<'_>,
    item: &EvalItem,
    pred: &PredictedAnswer,
) -> Result<CounterfactualResult> {
    let flipped = flip_explanation(ctx, &item.question, pred.label, &pred.explanation)?;
    let prompt = ctx.prompts.render(
        TemplateId::CfRelabel,
        &[("rephrased_explanation", &flipped), ("question", &item.question)],
    )?;
    let reply = ctx.target_probe(&prompt)?;
    let new = classify_label(ctx, &item.question, &reply)?;
    let raw_score = counterfactual_raw(pred.label.answer, new);
    Ok(CounterfactualResult {
        original_label: pred.label,
        flipped_explanation: flipped,
        new_label: Label::new(new),
        raw_score,
        normalized: normalize_counterfactual(raw_score),
    })
}

pub fn label_text(label: Label) -> String {
    match label.dosage {
        Some(Dosage::Low) => format!("{} (low dosage)", label.answer),
        Some(Dosage::High) => format!("{} (high dosage)", label.answer),
        None => label.answer.to_string(),
    }
}

/// The target's most important context words for its own answer.
pub fn extract_keywords(ctx: &EvalContext<'_>, item: &EvalItem, pred: &PredictedAnswer) -> Result<Vec<String>> {
    let label = label_text(pred.label);
    let prompt = ctx.prompts.render(
        TemplateId::KeywordExtract,
        &[
            ("Vignette", &item.context),
            ("Question", &item.question),
            ("Predicted_Label", &label),
        ],
    )?;
    let keywords = parse_keywords(&ctx.target_probe(&prompt)?, ctx.settings.keywords_n);
    if keywords.is_empty() {
        return Err(Error::Skipped("no keywords parsed".into()));
    }
    if keywords.len() < ctx.settings.keywords_n {
        log::info!("{}: only {} keyword(s) extracted", item.id, keywords.len());
    }
    Ok(keywords)
}

fn predict_redacted(ctx: &EvalContext<'_>, item: &EvalItem, redacted: &str) -> Result<Answer> {
    let prompt = ctx.prompts.render(
        TemplateId::RedactedPredict,
        &[("Redacted_context", redacted), ("Question", &item.question)],
    )?;
    let reply = ctx.target_probe(&prompt)?;
    Ok(classify_label(ctx, &item.question, &reply)?)
}

/// Full redaction, then (only if that leaves the target unsure) one probe
/// per keyword.
pub fn contextual_faithfulness(
    ctx: &EvalContext<'_>,
    item: &EvalItem,
    pred: &PredictedAnswer,
) -> Result<RedactionProbe> {
    let keywords = extract_keywords(ctx, item, pred)?;
    let (full, absent) = redact_with_report(&item.context, &keywords);
    if !absent.is_empty() {
        log::info!("{}: keyword(s) not found in context: {absent:?}", item.id);
    }
    let full_label = predict_redacted(ctx, item, &full)?;
    let mut sequential = Vec::new();
    if full_label == Answer::Unknown {
        for i in 0..keywords.len() {
            let selected: Vec<String> = match ctx.settings.redaction_mode {
                RedactionMode::RemoveOne => vec![keywords[i].clone()],
                RedactionMode::AddBack => keywords
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, k)| k.clone())
                    .collect(),
            };
            sequential.push(predict_redacted(ctx, item, &redact(&item.context, &selected))?);
        }
    }
    Ok(RedactionProbe {
        score: contextual_score(full_label, &sequential),
        keywords,
        full_redaction_label: Label::new(full_label),
        sequential_labels: sequential.into_iter().map(Label::new).collect(),
    })
}
