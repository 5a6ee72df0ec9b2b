use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{Backend, GatewayError, Message, ModelRequest, Role};

/// Retries on transport errors and 5xx responses only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        self.initial_backoff * 2u32.saturating_pow(attempt.saturating_sub(1))
    }
}

/// OpenAI-compatible `POST {base_url}/chat/completions` client.
pub struct HttpBackend {
    id: String,
    base_url: String,
    api_key: Option<String>,
    client: Client,
    retry: RetryPolicy,
}

#[derive(Deserialize)]
struct ChatCompletion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

enum Failure {
    Retryable(String),
    Fatal(String),
}

impl HttpBackend {
    pub fn new(
        id: impl Into<String>,
        base_url: impl Into<String>,
        api_key: Option<String>,
    ) -> Result<Self, GatewayError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| GatewayError::Config(format!("http client: {e}")))?;
        Ok(Self {
            id: id.into(),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            client,
            retry: RetryPolicy::default(),
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url)
    }

    fn send_once(&self, body: &Value) -> Result<String, Failure> {
        let mut req = self.client.post(self.endpoint()).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Failure::Retryable(format!("transport: {e}")))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Failure::Retryable(format!("transport: {e}")))?;
        if status.is_server_error() {
            return Err(Failure::Retryable(format!("{status}: {}", excerpt(&text))));
        }
        if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            return Err(Failure::Fatal(format!("authentication failed ({status})")));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(format!("{status}: {}", excerpt(&text))));
        }
        let parsed: ChatCompletion =
            serde_json::from_str(&text).map_err(|e| Failure::Fatal(format!("unparseable reply: {e}")))?;
        Ok(parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default())
    }
}

fn excerpt(s: &str) -> String {
    s.chars().take(200).collect()
}

fn wire_message(msg: &Message) -> Result<Value, GatewayError> {
    let role = match msg.role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
    };
    if msg.images.is_empty() {
        return Ok(json!({ "role": role, "content": msg.text }));
    }
    let mut parts = Vec::with_capacity(msg.images.len() + 1);
    if !msg.text.is_empty() {
        parts.push(json!({ "type": "text", "text": msg.text }));
    }
    for image in &msg.images {
        parts.push(json!({ "type": "image_url", "image_url": { "url": image.to_data_url()? } }));
    }
    Ok(json!({ "role": role, "content": parts }))
}

/// The JSON body sent to a chat-completions endpoint.
pub fn wire_body(request: &ModelRequest) -> Result<Value, GatewayError> {
    let messages = request
        .messages
        .iter()
        .map(wire_message)
        .collect::<Result<Vec<_>, _>>()?;
    let mut body = json!({
        "model": request.model_id,
        "messages": messages,
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    });
    if let Some(seed) = request.seed_hint {
        body["seed"] = json!(seed);
    }
    Ok(body)
}

impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &ModelRequest) -> Result<String, GatewayError> {
        let body = wire_body(request)?;
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.send_once(&body) {
                Ok(text) => return Ok(text),
                Err(Failure::Fatal(reason)) => {
                    return Err(GatewayError::BackendUnavailable {
                        backend_id: self.id.clone(),
                        attempts: attempt,
                        reason,
                    })
                }
                Err(Failure::Retryable(reason)) => {
                    if attempt >= self.retry.max_attempts {
                        return Err(GatewayError::BackendUnavailable {
                            backend_id: self.id.clone(),
                            attempts: attempt,
                            reason,
                        });
                    }
                    log::warn!("{}: attempt {attempt} failed ({reason}), retrying", self.id);
                    thread::sleep(self.retry.backoff(attempt));
                }
            }
        }
    }
}
