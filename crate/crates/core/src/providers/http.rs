//! OpenAI-compatible HTTP backends plus a minimal JSON NER service client.

use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::json;

use super::{EntityTagger, GenerationRequest, ModelRef, TextEmbedder, TextGenerator};
use crate::error::ProviderError;

const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

fn build_client(timeout: Duration) -> Client {
    Client::builder()
        .timeout(timeout)
        .build()
        .expect("reqwest client builds with static settings")
}

fn api_key(var: &str) -> Option<String> {
    if var.is_empty() {
        return None;
    }
    std::env::var(var).ok().filter(|k| !k.is_empty())
}

fn join(endpoint: &str, path: &str) -> String {
    format!("{}/{}", endpoint.trim_end_matches('/'), path)
}

/// POSTs `body` and returns the raw response bytes, classifying failures.
fn post_json(
    client: &Client,
    url: &str,
    key: Option<&str>,
    body: &serde_json::Value,
) -> Result<Vec<u8>, ProviderError> {
    let mut req = client.post(url).json(body);
    if let Some(key) = key {
        req = req.bearer_auth(key);
    }
    let resp = req.send().map_err(|e| ProviderError::Unavailable {
        attempts: 1,
        message: format!("{url}: {e}"),
    })?;
    let status = resp.status();
    let bytes = resp
        .bytes()
        .map_err(|e| ProviderError::Unavailable {
            attempts: 1,
            message: format!("{url}: reading body: {e}"),
        })?
        .to_vec();
    if status.is_success() {
        return Ok(bytes);
    }
    let message = format!("{url}: {}", String::from_utf8_lossy(&bytes).chars().take(300).collect::<String>());
    if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
        Err(ProviderError::Unavailable {
            attempts: 1,
            message: format!("HTTP {}: {message}", status.as_u16()),
        })
    } else {
        Err(ProviderError::Configuration {
            status: status.as_u16(),
            message,
        })
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Extracts the first choice's message text from a chat completion body.
pub fn parse_chat_response(body: &[u8]) -> Result<String, ProviderError> {
    let parsed: ChatResponse =
        serde_json::from_slice(body).map_err(|e| ProviderError::Malformed(e.to_string()))?;
    let content = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| ProviderError::Malformed("no choices in completion".into()))?
        .message
        .content
        .unwrap_or_default();
    if content.trim().is_empty() {
        return Err(ProviderError::EmptyResponse);
    }
    Ok(content)
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

/// Extracts the first embedding from an embeddings response body.
pub fn parse_embedding_response(body: &[u8]) -> Result<Vec<f64>, ProviderError> {
    let parsed: EmbeddingResponse =
        serde_json::from_slice(body).map_err(|e| ProviderError::Malformed(e.to_string()))?;
    let vector = parsed
        .data
        .into_iter()
        .next()
        .ok_or_else(|| ProviderError::Malformed("no embeddings in response".into()))?
        .embedding;
    if vector.is_empty() {
        return Err(ProviderError::Malformed("empty embedding".into()));
    }
    Ok(vector)
}

#[derive(Deserialize)]
struct NerResponse {
    entities: Vec<NerEntity>,
}

#[derive(Deserialize)]
struct NerEntity {
    text: String,
}

/// Collects the `text` field of every entity; labels are ignored.
pub fn parse_ner_response(body: &[u8]) -> Result<Vec<String>, ProviderError> {
    let parsed: NerResponse =
        serde_json::from_slice(body).map_err(|e| ProviderError::Malformed(e.to_string()))?;
    Ok(parsed.entities.into_iter().map(|e| e.text).collect())
}

/// `POST {endpoint}/chat/completions` with a single user message.
pub struct OpenAiChat {
    client: Client,
}

impl OpenAiChat {
    pub fn new() -> Self {
        Self::with_timeout(DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(timeout: Duration) -> Self {
        OpenAiChat {
            client: build_client(timeout),
        }
    }
}

impl Default for OpenAiChat {
    fn default() -> Self {
        Self::new()
    }
}

pub fn chat_request_body(model: &ModelRef, request: &GenerationRequest<'_>) -> serde_json::Value {
    let mut body = json!({
        "model": model.model_name,
        "messages": [{"role": "user", "content": request.prompt}],
        "temperature": request.params.temperature,
        "max_tokens": request.params.max_tokens,
    });
    if let Some(seed) = request.params.seed {
        body["seed"] = json!(seed);
    }
    body
}

impl TextGenerator for OpenAiChat {
    fn generate(
        &self,
        model: &ModelRef,
        request: &GenerationRequest<'_>,
    ) -> Result<String, ProviderError> {
        let url = join(&model.endpoint_url, "chat/completions");
        let key = api_key(&model.api_key_env);
        let body = chat_request_body(model, request);
        let bytes = post_json(&self.client, &url, key.as_deref(), &body)?;
        parse_chat_response(&bytes)
    }
}

/// `POST {endpoint}/embeddings`.
pub struct OpenAiEmbeddings {
    client: Client,
    provider_id: String,
    model_name: String,
    endpoint_url: String,
    api_key_env: String,
}

impl OpenAiEmbeddings {
    pub fn new(provider_id: &str, model_name: &str, endpoint_url: &str, api_key_env: &str) -> Self {
        OpenAiEmbeddings {
            client: build_client(DEFAULT_TIMEOUT),
            provider_id: provider_id.into(),
            model_name: model_name.into(),
            endpoint_url: endpoint_url.into(),
            api_key_env: api_key_env.into(),
        }
    }
}

impl TextEmbedder for OpenAiEmbeddings {
    fn provider_id(&self) -> &str {
        &self.provider_id
    }

    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        let url = join(&self.endpoint_url, "embeddings");
        let key = api_key(&self.api_key_env);
        let body = json!({"model": self.model_name, "input": text});
        let bytes = post_json(&self.client, &url, key.as_deref(), &body)?;
        parse_embedding_response(&bytes)
    }
}

/// `POST {endpoint}/ner` with `{"text": ...}`.
pub struct HttpNer {
    client: Client,
    provider_id: String,
    model_name: String,
    endpoint_url: String,
    api_key_env: String,
}

impl HttpNer {
    pub fn new(provider_id: &str, model_name: &str, endpoint_url: &str, api_key_env: &str) -> Self {
        HttpNer {
            client: build_client(DEFAULT_TIMEOUT),
            provider_id: provider_id.into(),
            model_name: model_name.into(),
            endpoint_url: endpoint_url.into(),
            api_key_env: api_key_env.into(),
        }
    }
}

impl EntityTagger for HttpNer {
    fn provider_id(&self) -> &str {
        &self.provider_id
    }

    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn entities(&self, text: &str) -> Result<Vec<String>, ProviderError> {
        let url = join(&self.endpoint_url, "ner");
        let key = api_key(&self.api_key_env);
        let bytes = post_json(&self.client, &url, key.as_deref(), &json!({"text": text}))?;
        parse_ner_response(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chat_response_first_choice() {
        let body = br#"{"id":"x","choices":[{"index":0,"message":{"role":"assistant","content":"Yes."}},{"index":1,"message":{"role":"assistant","content":"No."}}]}"#;
        assert_eq!(parse_chat_response(body).unwrap(), "Yes.");
    }

    #[test]
    fn chat_response_empty_content() {
        let body = br#"{"choices":[{"message":{"role":"assistant","content":"   "}}]}"#;
        assert_eq!(parse_chat_response(body), Err(ProviderError::EmptyResponse));
        let null = br#"{"choices":[{"message":{"role":"assistant","content":null}}]}"#;
        assert_eq!(parse_chat_response(null), Err(ProviderError::EmptyResponse));
        assert!(matches!(
            parse_chat_response(br#"{"choices":[]}"#),
            Err(ProviderError::Malformed(_))
        ));
    }

    #[test]
    fn embedding_and_ner_bodies() {
        let emb = br#"{"object":"list","data":[{"embedding":[0.5,-1.0],"index":0}],"model":"m"}"#;
        assert_eq!(parse_embedding_response(emb).unwrap(), vec![0.5, -1.0]);
        let ner = br#"{"entities":[{"text":"Opioid","label":"DRUG"},{"text":"rib","label":"BODY"}]}"#;
        assert_eq!(parse_ner_response(ner).unwrap(), vec!["Opioid", "rib"]);
    }

    #[test]
    fn request_body_shape() {
        use crate::providers::{Role, SamplingParams};
        let model = ModelRef {
            provider_id: "p".into(),
            model_name: "llama3".into(),
            endpoint_url: "http://localhost:1/v1".into(),
            api_key_env: String::new(),
            role: Role::Judge,
        };
        let params = SamplingParams::deterministic(64, 7);
        let body = chat_request_body(
            &model,
            &GenerationRequest {
                prompt: "hi",
                params: &params,
                attempt_index: 2,
            },
        );
        assert_eq!(body["model"], "llama3");
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "hi");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["max_tokens"], 64);
        assert_eq!(body["seed"], 7);
    }
}
