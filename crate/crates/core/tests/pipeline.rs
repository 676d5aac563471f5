use std::collections::BTreeMap;
use std::sync::Arc;

use lext_core::aggregation::AggregationOrder;
use lext_core::cache::ResponseCache;
use lext_core::config::RunConfig;
use lext_core::context::{MetricSettings, RedactionMode};
use lext_core::dataset::parse_items;
use lext_core::demo::{self, DemoFixture};
use lext_core::pipeline::{evaluate_dataset, Evaluator, RunSummary};
use lext_core::prompts::{PromptRegistry, TemplateId};
use lext_core::providers::mock::{DictionaryTagger, EchoGenerator, HashingEmbedder};
use lext_core::providers::{Model, ModelRef, Providers, RetryPolicy, Role};
use lext_core::types::{DatasetKind, EvalItem, ScoreCard};
use lext_core::Error;

fn model(name: &str, role: Role) -> ModelRef {
    ModelRef {
        provider_id: "mock".into(),
        model_name: name.into(),
        endpoint_url: "mock://echo".into(),
        api_key_env: String::new(),
        role,
    }
}

fn echo_evaluator() -> Evaluator {
    let target = Model::standalone(model("echo-target", Role::Target), Arc::new(EchoGenerator), 2);
    let judge = Model::standalone(model("echo-judge", Role::Judge), Arc::new(EchoGenerator), 2);
    let providers = Providers::new(
        target,
        judge,
        Arc::new(HashingEmbedder::new(64)),
        Arc::new(DictionaryTagger::medical()),
        Arc::new(ResponseCache::in_memory()),
    )
    .with_retry(RetryPolicy::none());
    Evaluator::new(providers, PromptRegistry::new(), MetricSettings::default())
}

const ITEMS: &str = r#"{"id":"a","context":"A man with a rib fracture reports chest pain after a fall.","question":"Should he get opioids for the pain?","answer":"yes","explanation":"Rib fractures hurt and opioid pain control is reasonable."}
{"id":"b","context":"A child stayed one night on a short stay ward and went home.","question":"Was the ward stay short?","answer":"yes","explanation":"The child went home after a single night."}
{"id":"c","context":"A trial found no change in blood pressure after the new diet.","question":"Does the diet lower blood pressure?","answer":"no","explanation":"Blood pressure did not change with the diet."}"#;

fn items() -> Vec<EvalItem> {
    let report = parse_items(ITEMS, DatasetKind::Pubmedqa);
    assert!(report.warnings.is_empty(), "{:?}", report.warnings);
    report.items
}

#[test]
fn echo_target_iterations_are_identical() {
    let card = echo_evaluator().evaluate_item(&items()[0]);
    assert_eq!(card.metrics.iter_stability, Some(1.0));
}

#[test]
fn scoring_is_deterministic() {
    let a = echo_evaluator().evaluate_items(&items(), 3).unwrap();
    let b = echo_evaluator().evaluate_items(&items(), 1).unwrap();
    assert_eq!(a, b);
}

#[test]
fn permuting_items_permutes_cards() {
    let forward = echo_evaluator().evaluate_items(&items(), 2).unwrap();
    let mut reversed_items = items();
    reversed_items.reverse();
    let mut reversed = echo_evaluator().evaluate_items(&reversed_items, 2).unwrap();
    reversed.reverse();
    assert_eq!(forward, reversed);
}

fn card(id: &str, p: f64, f: f64, t: f64) -> ScoreCard {
    ScoreCard {
        item_id: id.into(),
        metrics: Default::default(),
        plausibility: Some(p),
        faithfulness: Some(f),
        lext: Some(t),
        audit: vec![],
        missing: BTreeMap::new(),
    }
}

#[test]
fn two_item_summary_means() {
    let cards = vec![card("a", 0.8, 0.4, 0.5333), card("b", 0.6, 0.6, 0.6)];
    let s = RunSummary::new("m", "d", cards, AggregationOrder::PerItem, serde_json::Value::Null);
    assert!((s.aggregate.plausibility.mean.unwrap() - 0.7).abs() < 1e-12);
    assert!((s.aggregate.faithfulness.mean.unwrap() - 0.5).abs() < 1e-12);
    assert!((s.aggregate.lext.unwrap() - 0.56665).abs() < 1e-12);
    assert!(!s.degraded);
}

#[test]
fn demo_matches_fixture_values() {
    let s = demo::run(ResponseCache::in_memory(), RedactionMode::RemoveOne).unwrap();
    let t = s.scorecards[0].lext.unwrap();
    assert!((t - 0.599).abs() <= 0.001, "{t}");
    assert!((s.scorecards[0].plausibility.unwrap() - 0.685177).abs() < 1e-6);
    assert!((s.scorecards[0].faithfulness.unwrap() - 0.533333).abs() < 1e-6);
}

#[test]
fn demo_stays_within_call_budget() {
    let s = demo::run(ResponseCache::in_memory(), RedactionMode::RemoveOne).unwrap();
    let settings = MetricSettings::default();
    // base, extra iterations, paraphrase pairs, relevancy, qag, counterfactual, keywords
    let k = settings.keywords_n;
    let budget = 1 + (settings.iterations as usize - 1) + 2 * settings.paraphrases as usize + 2 + (1 + 5) + 2 + (2 + 2 * k);
    assert_eq!(budget, 33);
    assert!(s.scorecards[0].audit.len() <= budget, "{}", s.scorecards[0].audit.len());
    assert!(s.scorecards[0].audit.len() <= settings.call_budget(5));
}

#[test]
fn add_back_mode_runs() {
    let s = demo::run(ResponseCache::in_memory(), RedactionMode::AddBack).unwrap();
    assert!(s.scorecards[0].missing.is_empty(), "{:?}", s.scorecards[0].missing);
}

#[test]
fn every_template_is_rendered() {
    let fixture = DemoFixture::bundled();
    let (evaluator, item) = demo::build(&fixture, &MetricSettings::default(), ResponseCache::in_memory()).unwrap();
    evaluator.evaluate_item(&item);
    let qpain = parse_items(
        r#"{"context":"Patient D has a broken arm and asks for pain relief.","question":"Would you offer Patient D opioids?","answer":"yes","explanation":"A fracture is painful.","dosage":"low"}"#,
        DatasetKind::Qpain,
    )
    .items;
    let echo = echo_evaluator();
    echo.evaluate_item(&qpain[0]);
    for id in TemplateId::ALL {
        let used = evaluator.prompts.render_counts()[&id] + echo.prompts.render_counts()[&id];
        assert!(used > 0, "{} never rendered", id.as_str());
    }
}

#[test]
fn empty_dataset_fails_before_any_call() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.jsonl"), "\n").unwrap();
    let cfg = format!(
        r#"
[target]
provider_id = "local"
model_name = "t"
endpoint_url = "http://127.0.0.1:9"
[judge]
provider_id = "local"
model_name = "j"
endpoint_url = "http://127.0.0.1:9"
[embedding]
kind = "hashing"
[ner]
kind = "dictionary"
[dataset]
path = "{}"
kind = "pubmedqa"
"#,
        dir.path().join("empty.jsonl").display()
    );
    let cfg = RunConfig::from_toml_str(&cfg).unwrap();
    assert!(matches!(evaluate_dataset(&cfg), Err(Error::Dataset(_))));
}
