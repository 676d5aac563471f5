use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use mockito::{Matcher, Server};
use serde_json::{json, Value};

use lext_core::cache::ResponseCache;
use lext_core::config::RunConfig;
use lext_core::pipeline::evaluate_dataset;
use lext_core::providers::http::OpenAiChat;
use lext_core::providers::mock::{DictionaryTagger, HashingEmbedder};
use lext_core::providers::{CallLog, Model, ModelRef, Providers, RetryPolicy, Role, SamplingParams};
use lext_core::report::{render_reports, write_reports};
use lext_core::ProviderError;

fn chat_body(content: &str) -> Vec<u8> {
    json!({"choices": [{"message": {"role": "assistant", "content": content}}]})
        .to_string()
        .into_bytes()
}

fn providers(url: &str, key_env: &str) -> Providers {
    let reference = ModelRef {
        provider_id: "local".into(),
        model_name: "tiny-chat".into(),
        endpoint_url: url.into(),
        api_key_env: key_env.into(),
        role: Role::Target,
    };
    let judge = ModelRef {
        role: Role::Judge,
        ..reference.clone()
    };
    let backend = Arc::new(OpenAiChat::with_timeout(Duration::from_secs(5)));
    Providers::new(
        Model::standalone(reference, backend.clone(), 2),
        Model::standalone(judge, backend, 2),
        Arc::new(HashingEmbedder::new(32)),
        Arc::new(DictionaryTagger::medical()),
        Arc::new(ResponseCache::in_memory()),
    )
    .with_retry(RetryPolicy {
        max_attempts: 3,
        initial_backoff: Duration::from_millis(5),
    })
}

#[test]
fn chat_request_carries_model_params_and_key() {
    std::env::set_var("LEXT_WIRE_KEY_A", "sk-test-a");
    let mut server = Server::new();
    let mock = server
        .mock("POST", "/chat/completions")
        .match_header("authorization", "Bearer sk-test-a")
        .match_body(Matcher::PartialJson(json!({
            "model": "tiny-chat",
            "messages": [{"role": "user", "content": "Is the sky blue?"}],
            "temperature": 0.0,
            "max_tokens": 64,
            "seed": 7
        })))
        .with_status(200)
        .with_body(chat_body("Yes, it scatters blue light."))
        .expect(1)
        .create();
    let p = providers(&server.url(), "LEXT_WIRE_KEY_A");
    let log = CallLog::new();
    let params = SamplingParams::deterministic(64, 7);
    let reply = p.generate(&p.target, "Is the sky blue?", &params, 0, &log).unwrap();
    assert_eq!(reply, "Yes, it scatters blue light.");
    // the second call is a cache hit
    p.generate(&p.target, "Is the sky blue?", &params, 0, &log).unwrap();
    mock.assert();
    assert_eq!(log.len(), 2);
}

#[test]
fn server_errors_are_retried_then_reported() {
    let mut server = Server::new();
    let mock = server
        .mock("POST", "/chat/completions")
        .with_status(503)
        .with_body("overloaded")
        .expect(3)
        .create();
    let p = providers(&server.url(), "");
    let err = p
        .generate(&p.judge, "ping", &SamplingParams::deterministic(8, 0), 0, &CallLog::new())
        .unwrap_err();
    mock.assert();
    assert!(matches!(err, ProviderError::Unavailable { attempts: 3, .. }), "{err:?}");
}

#[test]
fn client_errors_are_not_retried() {
    let mut server = Server::new();
    let mock = server
        .mock("POST", "/chat/completions")
        .with_status(401)
        .with_body(r#"{"error":"bad key"}"#)
        .expect(1)
        .create();
    let p = providers(&server.url(), "");
    let err = p
        .generate(&p.judge, "ping", &SamplingParams::deterministic(8, 0), 0, &CallLog::new())
        .unwrap_err();
    mock.assert();
    assert!(matches!(err, ProviderError::Configuration { status: 401, .. }), "{err:?}");
}

#[test]
fn empty_completion_is_an_error() {
    let mut server = Server::new();
    server
        .mock("POST", "/chat/completions")
        .with_status(200)
        .with_body(chat_body("   "))
        .create();
    let p = providers(&server.url(), "");
    let err = p
        .generate(&p.judge, "ping", &SamplingParams::deterministic(8, 0), 0, &CallLog::new())
        .unwrap_err();
    assert_eq!(err, ProviderError::EmptyResponse);
}

fn prompt_of(body: &[u8]) -> String {
    let v: Value = serde_json::from_slice(body).unwrap();
    v["messages"][0]["content"].as_str().unwrap_or_default().to_string()
}

fn contains(dir: &Path, needle: &str) -> bool {
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if std::fs::read_to_string(&path).unwrap_or_default().contains(needle) {
                return true;
            }
        }
    }
    false
}

#[test]
fn warm_cache_replays_offline() {
    const SECRET: &str = "sk-wire-secret-9f3a";
    std::env::set_var("LEXT_WIRE_KEY_B", SECRET);
    let mut server = Server::new();
    let chat_hits = Arc::new(AtomicUsize::new(0));
    let hits = chat_hits.clone();
    let _chat = server
        .mock("POST", "/chat/completions")
        .match_header("authorization", format!("Bearer {SECRET}").as_str())
        .with_status(200)
        .with_body_from_request(move |req| {
            hits.fetch_add(1, Ordering::SeqCst);
            let prompt = prompt_of(req.body().unwrap());
            let reply = if prompt.contains("Redacted") || prompt.contains("[REDACTED]") {
                "Unknown".to_string()
            } else if prompt.contains("keyword") || prompt.contains("Keyword") {
                "fracture, pain, opioid".to_string()
            } else {
                format!("Yes, rib fractures are painful and opioids help ({} chars).", prompt.len() % 5)
            };
            chat_body(&reply)
        })
        .create();
    let embed_hits = Arc::new(AtomicUsize::new(0));
    let ehits = embed_hits.clone();
    let _embed = server
        .mock("POST", "/embeddings")
        .with_status(200)
        .with_body_from_request(move |req| {
            ehits.fetch_add(1, Ordering::SeqCst);
            let v: Value = serde_json::from_slice(req.body().unwrap()).unwrap();
            let text = v["input"].as_str().unwrap_or_default();
            let vector = [
                1.0 + text.len() as f64 % 7.0,
                1.0 + text.matches(' ').count() as f64,
                1.0 + text.matches('e').count() as f64,
                2.0,
            ];
            json!({"data": [{"embedding": vector}]}).to_string().into_bytes()
        })
        .create();

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("items.jsonl"),
        concat!(
            r#"{"id":"r1","context":"A man has a rib fracture and pleuritic chest pain after a fall.","question":"Should he receive opioids?","answer":"yes","explanation":"Rib fracture pain is severe and opioid pain control is reasonable."}"#,
            "\n",
            r#"{"id":"r2","context":"A woman has a broken wrist and severe pain.","question":"Should she receive opioids?","answer":"yes","explanation":"A broken wrist is painful and short opioid use is reasonable."}"#,
            "\n"
        ),
    )
    .unwrap();
    let toml = format!(
        r#"
[target]
provider_id = "local"
model_name = "tiny-chat"
endpoint_url = "{url}"
api_key_env = "LEXT_WIRE_KEY_B"
[judge]
provider_id = "local"
model_name = "judge-chat"
endpoint_url = "{url}"
api_key_env = "LEXT_WIRE_KEY_B"
[embedding]
provider_id = "local"
model_name = "tiny-embed"
endpoint_url = "{url}"
[ner]
kind = "dictionary"
[dataset]
path = "items.jsonl"
kind = "pubmedqa"
[run]
cache_dir = "cache"
"#,
        url = server.url()
    );
    let cfg_path = dir.path().join("run.toml");
    std::fs::write(&cfg_path, toml).unwrap();
    let cfg = RunConfig::load(&cfg_path).unwrap();

    let first = evaluate_dataset(&cfg).unwrap();
    let (chat_after, embed_after) = (chat_hits.load(Ordering::SeqCst), embed_hits.load(Ordering::SeqCst));
    assert!(chat_after > 0 && embed_after > 0);

    let mut offline = cfg.clone();
    offline.run.offline = true;
    let second = evaluate_dataset(&offline).unwrap();
    assert_eq!(first, second);
    assert_eq!(render_reports(std::slice::from_ref(&first)).unwrap(), render_reports(&[second]).unwrap());
    assert_eq!(chat_hits.load(Ordering::SeqCst), chat_after, "offline run reached the network");
    assert_eq!(embed_hits.load(Ordering::SeqCst), embed_after);

    let out = dir.path().join("out");
    write_reports(&[first], &out).unwrap();
    assert!(!contains(dir.path(), SECRET), "API key written to disk");
}

#[test]
fn offline_miss_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cache = ResponseCache::on_disk(dir.path()).offline(true);
    let reference = ModelRef {
        provider_id: "local".into(),
        model_name: "m".into(),
        endpoint_url: "http://127.0.0.1:9".into(),
        api_key_env: String::new(),
        role: Role::Target,
    };
    let backend = Arc::new(OpenAiChat::new());
    let model = Model::standalone(reference, backend, 1);
    let p = Providers::new(
        model.clone(),
        model,
        Arc::new(HashingEmbedder::new(8)),
        Arc::new(DictionaryTagger::medical()),
        Arc::new(cache),
    );
    let err = p
        .generate(&p.target, "x", &SamplingParams::deterministic(8, 0), 0, &CallLog::new())
        .unwrap_err();
    assert!(matches!(err, ProviderError::Offline(_)), "{err:?}");
}
