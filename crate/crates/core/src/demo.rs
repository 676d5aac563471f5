//! A bundled single-item run with fully scripted providers.
//!
//! Replies are keyed on the exact prompts the pipeline renders, and the
//! embedder returns vectors built to hit fixed cosines, so the run is
//! deterministic and needs no network.

use std::sync::Arc;

use serde::Deserialize;

use crate::aggregation::AggregationOrder;
use crate::cache::ResponseCache;
use crate::context::{MetricSettings, RedactionMode};
use crate::dataset::DatasetRecord;
use crate::error::{Error, Result};
use crate::faithfulness::{label_text, redact};
use crate::parsing::{fast_label, parse_keywords, parse_prediction};
use crate::pipeline::{Evaluator, RunSummary};
use crate::plausibility::answer_prompt;
use crate::prompts::{PromptRegistry, TemplateId};
use crate::providers::mock::{DictionaryTagger, ScriptedEmbedder, ScriptedGenerator};
use crate::providers::{Model, ModelRef, Providers, RetryPolicy, Role};
use crate::types::{DatasetKind, EvalItem};

const FIXTURE: &str = include_str!("../fixtures/short_stay_ward.json");

pub const DEMO_MODEL: &str = "scripted-target";
pub const DEMO_DATASET: &str = "short_stay_ward";

#[derive(Debug, Clone, Deserialize)]
pub struct Scored {
    pub reply: String,
    pub cosine: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Paraphrase {
    pub question: String,
    pub reply: String,
    pub cosine: f64,
}

/// A target reply plus the judge's label for it when it is not a bare
/// label word.
#[derive(Debug, Clone, Deserialize)]
pub struct Labeled {
    pub reply: String,
    #[serde(default)]
    pub judge: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Qag {
    pub questions: Vec<String>,
    pub answers: Vec<Labeled>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Counterfactual {
    pub flipped: String,
    pub reply: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoFixture {
    pub item: DatasetRecord,
    pub dim: usize,
    pub terms: Vec<String>,
    pub base: Scored,
    pub iterations: Vec<Scored>,
    pub paraphrases: Vec<Paraphrase>,
    pub context_question: Scored,
    pub qag: Qag,
    pub counterfactual: Counterfactual,
    pub keywords: String,
    pub full_redaction: Labeled,
    pub sequential: Vec<Labeled>,
}

impl DemoFixture {
    pub fn bundled() -> Self {
        serde_json::from_str(FIXTURE).expect("bundled fixture parses")
    }

    pub fn item(&self) -> EvalItem {
        self.item
            .clone()
            .into_item(DatasetKind::Pubmedqa, DEMO_DATASET.into())
            .expect("fixture item is valid")
    }
}

fn model(name: &str, role: Role) -> ModelRef {
    ModelRef {
        provider_id: "mock".into(),
        model_name: name.into(),
        endpoint_url: "mock://scripted".into(),
        api_key_env: String::new(),
        role,
    }
}

struct Vectors {
    dim: usize,
    next_axis: usize,
    embedder: ScriptedEmbedder,
}

impl Vectors {
    fn axis(&mut self) -> Result<Vec<f64>> {
        if self.next_axis >= self.dim {
            return Err(Error::Config(format!("fixture needs more than {} dimensions", self.dim)));
        }
        let mut v = vec![0.0; self.dim];
        v[self.next_axis] = 1.0;
        self.next_axis += 1;
        Ok(v)
    }

    fn anchor(&mut self, text: &str) -> Result<Vec<f64>> {
        let v = self.axis()?;
        self.embedder.insert(text, v.clone())?;
        Ok(v)
    }

    /// Gives `text` a unit vector at cosine `c` from `anchor`.
    fn at_cosine(&mut self, text: &str, anchor: &[f64], c: f64) -> Result<()> {
        let ortho = self.axis()?;
        let s = (1.0 - c * c).max(0.0).sqrt();
        let v = anchor.iter().zip(&ortho).map(|(a, o)| c * a + s * o).collect();
        self.embedder.insert(text, v)
    }
}

struct Script<'a> {
    prompts: &'a PromptRegistry,
    replies: ScriptedGenerator,
}

impl Script<'_> {
    fn reply(&mut self, id: TemplateId, bindings: &[(&str, &str)], replies: Vec<String>) -> Result<()> {
        let prompt = self.prompts.render(id, bindings)?;
        self.replies.insert_prompt(&prompt, replies);
        Ok(())
    }

    /// Scripts the judge's label for `answer` unless the fast path applies.
    fn label(&mut self, question: &str, answer: &Labeled) -> Result<()> {
        if fast_label(&answer.reply).is_some() {
            return Ok(());
        }
        let judge = answer
            .judge
            .clone()
            .ok_or_else(|| Error::Config(format!("no judge label for `{}`", answer.reply)))?;
        self.reply(
            TemplateId::LabelAnalysis,
            &[("Question", question), ("Predicted_Answer", answer.reply.trim())],
            vec![judge],
        )
    }
}

/// Builds the scripted evaluator and the single demo item.
pub fn build(fixture: &DemoFixture, settings: &MetricSettings, cache: ResponseCache) -> Result<(Evaluator, EvalItem)> {
    let item = fixture.item();
    let prompts = PromptRegistry::new();
    if fixture.iterations.len() + 1 != settings.iterations as usize
        || fixture.paraphrases.len() != settings.paraphrases as usize
    {
        return Err(Error::Config(
            "the demo fixture is scripted for the default iteration and paraphrase counts".into(),
        ));
    }
    let mut vectors = Vectors {
        dim: fixture.dim,
        next_axis: 0,
        embedder: ScriptedEmbedder::new(fixture.dim, "scripted-embedding"),
    };
    let mut script = Script {
        prompts: &prompts,
        replies: ScriptedGenerator::new(),
    };
    let kind = item.dataset_kind;
    let ground = vectors.anchor(&item.ground_explanation)?;
    let question_axis = vectors.anchor(&item.question)?;

    // answer samples
    let answer = answer_prompt(&prompts, &item, &item.question)?;
    let mut samples = vec![fixture.base.clone()];
    samples.extend(fixture.iterations.iter().cloned());
    for s in &samples {
        let expl = parse_prediction(&s.reply, kind).explanation;
        vectors.at_cosine(&expl, &ground, s.cosine)?;
    }
    script
        .replies
        .insert_prompt(&answer, samples.iter().map(|s| s.reply.clone()).collect());
    let base = parse_prediction(&fixture.base.reply, kind);

    // paraphrases
    let count = fixture.paraphrases.len().to_string();
    for (i, p) in fixture.paraphrases.iter().enumerate() {
        let index = (i + 1).to_string();
        script.reply(
            TemplateId::ParaphraseGen,
            &[("question", &item.question), ("index", &index), ("count", &count)],
            vec![p.question.clone()],
        )?;
        let prompt = answer_prompt(&prompts, &item, &p.question)?;
        script.replies.insert_prompt(&prompt, vec![p.reply.clone()]);
        vectors.at_cosine(&parse_prediction(&p.reply, kind).explanation, &ground, p.cosine)?;
    }

    // context relevancy
    script.reply(
        TemplateId::ContextrelQuestionGen,
        &[("explanation", &base.explanation)],
        vec![fixture.context_question.reply.clone()],
    )?;
    vectors.at_cosine(
        fixture.context_question.reply.trim(),
        &question_axis,
        fixture.context_question.cosine,
    )?;

    // QAG
    script.reply(
        TemplateId::QagQuestionGen,
        &[("explanation", &base.explanation)],
        vec![fixture.qag.questions.join("\n")],
    )?;
    for (q, a) in fixture.qag.questions.iter().zip(&fixture.qag.answers) {
        script.reply(
            TemplateId::QagAnswerable,
            &[("explanation", &base.explanation), ("question", q)],
            vec![a.reply.clone()],
        )?;
        script.label(q, a)?;
    }

    // counterfactual
    let label = base.label.answer;
    let opposite = label
        .opposite()
        .ok_or_else(|| Error::Config("demo base answer must be yes or no".into()))?;
    let cf = &fixture.counterfactual;
    script.reply(
        TemplateId::CfFlipExplanation,
        &[
            ("question", &item.question),
            ("label", label.as_str()),
            ("explanation", &base.explanation),
            ("opposite_label", opposite.as_str()),
        ],
        vec![cf.flipped.clone()],
    )?;
    script.reply(
        TemplateId::CfRelabel,
        &[("rephrased_explanation", &cf.flipped), ("question", &item.question)],
        vec![cf.reply.clone()],
    )?;
    script.label(
        &item.question,
        &Labeled {
            reply: cf.reply.clone(),
            judge: None,
        },
    )?;

    // contextual faithfulness
    let predicted = label_text(base.label);
    script.reply(
        TemplateId::KeywordExtract,
        &[
            ("Vignette", &item.context),
            ("Question", &item.question),
            ("Predicted_Label", &predicted),
        ],
        vec![fixture.keywords.clone()],
    )?;
    let keywords = parse_keywords(&fixture.keywords, settings.keywords_n);
    let mut probes = vec![(redact(&item.context, &keywords), &fixture.full_redaction)];
    for (i, answer) in fixture.sequential.iter().enumerate().take(keywords.len()) {
        let selected: Vec<String> = match settings.redaction_mode {
            RedactionMode::RemoveOne => vec![keywords[i].clone()],
            RedactionMode::AddBack => keywords
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, k)| k.clone())
                .collect(),
        };
        probes.push((redact(&item.context, &selected), answer));
    }
    for (context, answer) in probes {
        script.reply(
            TemplateId::RedactedPredict,
            &[("Redacted_context", &context), ("Question", &item.question)],
            vec![answer.reply.clone()],
        )?;
        script.label(&item.question, answer)?;
    }

    let replies = Arc::new(script.replies);
    let target = Model::standalone(model(DEMO_MODEL, Role::Target), replies.clone(), 4);
    let judge = Model::standalone(model("scripted-judge", Role::Judge), replies, 4);
    let providers = Providers::new(
        target,
        judge,
        Arc::new(vectors.embedder),
        Arc::new(DictionaryTagger::new(&fixture.terms)),
        Arc::new(cache),
    )
    .with_retry(RetryPolicy::none());
    Ok((Evaluator::new(providers, prompts, settings.clone()), item))
}

/// Scores the bundled item and returns the run summary.
pub fn run(cache: ResponseCache, redaction_mode: RedactionMode) -> Result<RunSummary> {
    let settings = MetricSettings {
        redaction_mode,
        ..MetricSettings::default()
    };
    let fixture = DemoFixture::bundled();
    let (evaluator, item) = build(&fixture, &settings, cache)?;
    let card = evaluator.evaluate_item(&item);
    let config = serde_json::json!({
        "demo": DEMO_DATASET,
        "target": DEMO_MODEL,
        "metrics": settings,
        "aggregation_order": AggregationOrder::PerItem.as_str(),
    });
    Ok(RunSummary::new(DEMO_MODEL, DEMO_DATASET, vec![card], AggregationOrder::PerItem, config))
}
