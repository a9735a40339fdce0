//! OpenAI-compatible chat-completions client.

use std::sync::Arc;
use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use super::{BackendError, ChatBackend, ChatMessage, ChatRequest, Role};

pub trait Sleeper: Send + Sync {
    fn sleep(&self, duration: Duration);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Exponential backoff between attempts: `base_delay * 2^(n-1)`, capped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Total transport attempts per call, including the first.
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn delay_after(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt.saturating_sub(1));
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Server base URL, e.g. `http://localhost:8000`, or a full
    /// `.../chat/completions` endpoint.
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl HttpConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
        }
    }

    pub fn endpoint(&self) -> String {
        let base = self.url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else if base.ends_with("/v1") {
            format!("{base}/chat/completions")
        } else {
            format!("{base}/v1/chat/completions")
        }
    }
}

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    config: HttpConfig,
    endpoint: String,
    sleeper: Arc<dyn Sleeper>,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        Self::with_sleeper(config, Arc::new(ThreadSleeper))
    }

    pub fn with_sleeper(config: HttpConfig, sleeper: Arc<dyn Sleeper>) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Transport { attempts: 0, message: e.to_string() })?;
        let endpoint = config.endpoint();
        Ok(Self { client, config, endpoint, sleeper })
    }

    pub fn request_body(&self, request: &ChatRequest) -> Value {
        json!({
            "model": self.config.model,
            "messages": request.messages.iter().map(wire_message).collect::<Vec<_>>(),
            "temperature": request.decode.temperature,
            "max_tokens": request.decode.max_tokens,
        })
    }

    fn send_once(&self, body: &Value) -> Result<String, Attempt> {
        let mut builder = self.client.post(&self.endpoint).json(body);
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| Attempt::Transient(Failure::Transport(e.to_string())))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| Attempt::Transient(Failure::Transport(e.to_string())))?;
        if status.is_success() {
            return Ok(text);
        }
        let failure = Failure::Status(status.as_u16(), text);
        if status.as_u16() == 429 || status.is_server_error() {
            Err(Attempt::Transient(failure))
        } else {
            Err(Attempt::Fatal(failure))
        }
    }
}

enum Failure {
    Transport(String),
    Status(u16, String),
}

enum Attempt {
    Transient(Failure),
    Fatal(Failure),
}

impl Failure {
    fn into_error(self, attempts: u32) -> BackendError {
        match self {
            Failure::Transport(message) => BackendError::Transport { attempts, message },
            Failure::Status(status, body) => BackendError::Status { status, attempts, body },
        }
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, _role: Role, request: &ChatRequest) -> Result<String, BackendError> {
        let body = self.request_body(request);
        let max_attempts = self.config.retry.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            match self.send_once(&body) {
                Ok(text) => return extract_content(&text),
                Err(Attempt::Fatal(f)) => return Err(f.into_error(attempt)),
                Err(Attempt::Transient(f)) => {
                    if attempt >= max_attempts {
                        return Err(f.into_error(attempt));
                    }
                    let delay = self.config.retry.delay_after(attempt);
                    log::debug!("{}: transient failure on attempt {attempt}, retrying in {delay:?}", self.endpoint);
                    self.sleeper.sleep(delay);
                    attempt += 1;
                }
            }
        }
    }
}

fn wire_message(message: &ChatMessage) -> Value {
    let role = message.role.as_str();
    match &message.image {
        None => json!({ "role": role, "content": message.text }),
        Some(img) => {
            let data = base64::engine::general_purpose::STANDARD.encode(img.bytes.as_slice());
            json!({
                "role": role,
                "content": [
                    { "type": "text", "text": message.text },
                    { "type": "image_url", "image_url": { "url": format!("data:{};base64,{}", img.media_type, data) } },
                ],
            })
        }
    }
}

/// Reads `choices[0].message.content`, accepting either a string or a list
/// of text parts.
fn extract_content(body: &str) -> Result<String, BackendError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
    let content = value
        .pointer("/choices/0/message/content")
        .ok_or_else(|| BackendError::MalformedResponse("missing choices[0].message.content".into()))?;
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join("")),
        other => Err(BackendError::MalformedResponse(format!("content is not text: {other}"))),
    }
}
