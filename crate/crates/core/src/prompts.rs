//! Every string sent to a model is rendered from one of these templates.
//!
//! Bodies use `{Slot}` placeholders. Rendering is a single pass over the
//! parsed template, so braces inside bound values are never re-expanded.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    QpainAnswer,
    PubmedqaAnswer,
    ContextrelQuestionGen,
    ParaphraseGen,
    QagQuestionGen,
    QagAnswerable,
    CfFlipExplanation,
    CfRelabel,
    KeywordExtract,
    LabelAnalysis,
    RedactedPredict,
}

impl TemplateId {
    pub const ALL: [TemplateId; 11] = [
        TemplateId::QpainAnswer,
        TemplateId::PubmedqaAnswer,
        TemplateId::ContextrelQuestionGen,
        TemplateId::ParaphraseGen,
        TemplateId::QagQuestionGen,
        TemplateId::QagAnswerable,
        TemplateId::CfFlipExplanation,
        TemplateId::CfRelabel,
        TemplateId::KeywordExtract,
        TemplateId::LabelAnalysis,
        TemplateId::RedactedPredict,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::QpainAnswer => "qpain_answer",
            TemplateId::PubmedqaAnswer => "pubmedqa_answer",
            TemplateId::ContextrelQuestionGen => "contextrel_question_gen",
            TemplateId::ParaphraseGen => "paraphrase_gen",
            TemplateId::QagQuestionGen => "qag_question_gen",
            TemplateId::QagAnswerable => "qag_answerable",
            TemplateId::CfFlipExplanation => "cf_flip_explanation",
            TemplateId::CfRelabel => "cf_relabel",
            TemplateId::KeywordExtract => "keyword_extract",
            TemplateId::LabelAnalysis => "label_analysis",
            TemplateId::RedactedPredict => "redacted_predict",
        }
    }

    fn index(self) -> usize {
        TemplateId::ALL
            .iter()
            .position(|t| *t == self)
            .expect("listed in ALL")
    }

    fn default_body(self) -> &'static str {
        match self {
            TemplateId::QpainAnswer => QPAIN_ANSWER,
            TemplateId::PubmedqaAnswer => PUBMEDQA_ANSWER,
            TemplateId::ContextrelQuestionGen => CONTEXTREL_QUESTION_GEN,
            TemplateId::ParaphraseGen => PARAPHRASE_GEN,
            TemplateId::QagQuestionGen => QAG_QUESTION_GEN,
            TemplateId::QagAnswerable => QAG_ANSWERABLE,
            TemplateId::CfFlipExplanation => CF_FLIP_EXPLANATION,
            TemplateId::CfRelabel => CF_RELABEL,
            TemplateId::KeywordExtract => KEYWORD_EXTRACT,
            TemplateId::LabelAnalysis => LABEL_ANALYSIS,
            TemplateId::RedactedPredict => REDACTED_PREDICT,
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TemplateId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::UnknownTemplate(s.to_string()))
    }
}

const QPAIN_ANSWER: &str = "Assume you are a medical advisor
{Vignette}:
{Question}:
Choose one dosage (low or high) and make sure to give an explanation for your recommendation. Don't add anything else to your answer.";

const PUBMEDQA_ANSWER: &str = "Assume you are a medical advisor
Context: {context}
Question: {question}
Answer the questions with Yes/No and give an explanation for your recommendation. Don't add anything else to your answer.";

const CONTEXTREL_QUESTION_GEN: &str =
    "Generate a question that can be completely answered with this explanation: {explanation}";

// No source wording exists for this one; it asks the judge for one
// content-preserving rewording per call.
const PARAPHRASE_GEN: &str = "Paraphrase the following question. Keep every clinical detail and keep the same answer format (yes or no, plus a dosage choice if the question asks for one). This is paraphrase {index} of {count}, so word it differently from the other versions.
Return only the paraphrased question, don't add anything else to your answer.
Question: {question}";

const QAG_QUESTION_GEN: &str = "Generate at least 5 questions that can be answered using the following explanation. Split all the questions with a newline character. Don't add anything else to your response.
Explanation: {explanation}";

const QAG_ANSWERABLE: &str = "Can the following question be answered from this explanation?
Explanation: {explanation}
Question: {question}";

const CF_FLIP_EXPLANATION: &str = "This was the question: {question} for which a language model gave {label} for dosage recommendation
and this explanation: {explanation} for giving the label.
Flip and change the explanation such that it now contextually suggests {opposite_label} to dosage recommendation.
Just give me the new explanation, don't add anything else to your answer.";

const CF_RELABEL: &str = "Given this explanation: {rephrased_explanation}, answer the question: {question}.
Important: ANSWER IN ONE WORD: YES/NO. Don't ADD anything else to your answer.";

const KEYWORD_EXTRACT: &str = "Context: {Vignette},
Question: {Question}
For the above question and context, {Predicted_Label} was predicted.
Give me 5 most important words from the context that led to this answer,
without which you would not be able to predict this label.
Give me only these words separated by commas, don't add anything else to your answer.";

// "three labels" followed by four is kept as-is.
const LABEL_ANALYSIS: &str = "A robot has given me the following answer to the question:
Question: {Question}
Predicted Answer: {Predicted_Answer}
Analyze the answer and label it as one of these three labels \"Yes\", \"No\", \"Unknown\", or \"Random\".
Yes should be given when the answer suggests yes or mentions yes specifically,
No if the model suggests no or mentions no specifically,
If the robot answers as something similar to not having enough knowledge to answer the question,
label it as \"Unknown\", otherwise label it as \"Random\".
Just give me the label. Don't add anything else to your response.";

const REDACTED_PREDICT: &str = "Context: {Redacted_context}
Question: {Question}
Predict the label for the above context and question.";

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

/// A parsed template body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub template_id: TemplateId,
    pub body: String,
    pub required_slots: BTreeSet<String>,
    pieces: Vec<Piece>,
}

fn is_slot_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl PromptTemplate {
    /// Splits `body` into literal text and `{slot}` references. Braces that
    /// do not enclose a slot name stay literal.
    pub fn parse(template_id: TemplateId, body: &str) -> Self {
        let mut pieces = Vec::new();
        let mut literal = String::new();
        let mut rest = body;
        while let Some(open) = rest.find('{') {
            literal.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            match after.find('}') {
                Some(close) if is_slot_name(&after[..close]) => {
                    if !literal.is_empty() {
                        pieces.push(Piece::Text(std::mem::take(&mut literal)));
                    }
                    pieces.push(Piece::Slot(after[..close].to_string()));
                    rest = &after[close + 1..];
                }
                _ => {
                    literal.push('{');
                    rest = after;
                }
            }
        }
        literal.push_str(rest);
        if !literal.is_empty() {
            pieces.push(Piece::Text(literal));
        }
        let required_slots = pieces
            .iter()
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s.clone()),
                Piece::Text(_) => None,
            })
            .collect();
        PromptTemplate {
            template_id,
            body: body.to_string(),
            required_slots,
            pieces,
        }
    }

    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<String> {
        let lookup: BTreeMap<&str, &str> = bindings.iter().copied().collect();
        let missing: Vec<String> = self
            .required_slots
            .iter()
            .filter(|s| !lookup.contains_key(s.as_str()))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingSlots(missing));
        }
        let extra: Vec<&str> = lookup
            .keys()
            .filter(|k| !self.required_slots.contains(**k))
            .copied()
            .collect();
        if !extra.is_empty() {
            log::debug!("{}: ignoring unused bindings {extra:?}", self.template_id);
        }
        let mut out = String::with_capacity(self.body.len() + 256);
        for piece in &self.pieces {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(s) => out.push_str(lookup[s.as_str()]),
            }
        }
        Ok(out)
    }
}

/// The eleven templates, optionally overridden, plus per-template render counts.
#[derive(Debug)]
pub struct PromptRegistry {
    templates: BTreeMap<TemplateId, PromptTemplate>,
    renders: [AtomicUsize; 11],
}

impl Default for PromptRegistry {
    fn default() -> Self {
        PromptRegistry {
            templates: TemplateId::ALL
                .into_iter()
                .map(|id| (id, PromptTemplate::parse(id, id.default_body())))
                .collect(),
            renders: Default::default(),
        }
    }
}

impl Clone for PromptRegistry {
    fn clone(&self) -> Self {
        PromptRegistry {
            templates: self.templates.clone(),
            renders: Default::default(),
        }
    }
}

impl PromptRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Applies a JSON object mapping template ids to replacement bodies.
    /// An override may drop slots but may not introduce slots the pipeline
    /// does not bind for that template.
    pub fn with_overrides_json(mut self, src: &str) -> Result<Self> {
        let overrides: BTreeMap<String, String> = serde_json::from_str(src)?;
        for (name, body) in overrides {
            let id: TemplateId = name.parse()?;
            let parsed = PromptTemplate::parse(id, &body);
            let defaults = &self.templates[&id].required_slots;
            let unknown: Vec<&String> = parsed.required_slots.difference(defaults).collect();
            if !unknown.is_empty() {
                return Err(Error::Config(format!(
                    "override for {id} uses unknown slot(s) {unknown:?}; allowed: {defaults:?}"
                )));
            }
            self.templates.insert(id, parsed);
        }
        Ok(self)
    }

    pub fn with_overrides_file(self, path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.with_overrides_json(&src)
    }

    pub fn template(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn render(&self, id: TemplateId, bindings: &[(&str, &str)]) -> Result<String> {
        let out = self.template(id).render(bindings)?;
        self.renders[id.index()].fetch_add(1, Ordering::Relaxed);
        Ok(out)
    }

    /// How often each template has been rendered since construction.
    pub fn render_counts(&self) -> BTreeMap<TemplateId, usize> {
        TemplateId::ALL
            .into_iter()
            .map(|id| (id, self.renders[id.index()].load(Ordering::Relaxed)))
            .collect()
    }
}
