//! Client for OpenAI-style chat-completion servers (llama.cpp, vLLM,
//! Ollama and friends all expose this shape).

use std::thread;
use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use super::{Backend, BackendConfig, Completion, LlmError};
use crate::prompt::Prompt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Request body posted to `{base_url}/chat/completions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub stream: bool,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    #[serde(default)]
    message: Option<ChoiceMessage>,
    #[serde(default)]
    text: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

enum Failure {
    Transient(String),
    Fatal(String),
}

pub struct HttpChatBackend {
    client: Client,
    endpoint: String,
    model: String,
    temperature: f64,
    max_tokens: u32,
    max_retries: u32,
    backoff: Duration,
}

impl HttpChatBackend {
    pub fn new(config: &BackendConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let base = config.base_url.as_deref().unwrap_or_default().trim_end_matches('/');
        let parsed = reqwest::Url::parse(base)
            .map_err(|e| LlmError::Config(format!("invalid base_url {base:?}: {e}")))?;
        if !matches!(parsed.scheme(), "http" | "https") {
            return Err(LlmError::Config(format!(
                "base_url must use http or https, got {}",
                parsed.scheme()
            )));
        }
        let client = Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| LlmError::Config(format!("cannot build HTTP client: {e}")))?;
        Ok(Self {
            client,
            endpoint: format!("{base}/chat/completions"),
            model: config.model_name.clone().unwrap_or_default(),
            temperature: config.temperature,
            max_tokens: config.max_tokens,
            max_retries: config.max_retries,
            backoff: Duration::from_millis(config.backoff_ms),
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn request_body(&self, prompt: &str) -> ChatRequest {
        ChatRequest {
            model: self.model.clone(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: prompt.to_string(),
            }],
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            stream: false,
        }
    }

    fn attempt(&self, body: &ChatRequest) -> Result<String, Failure> {
        let response = self.client.post(&self.endpoint).json(body).send().map_err(|e| {
            if e.is_timeout() || e.is_connect() || e.is_request() {
                Failure::Transient(e.to_string())
            } else {
                Failure::Fatal(e.to_string())
            }
        })?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| Failure::Transient(format!("reading body: {e}")))?;
        if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
            return Err(Failure::Transient(format!("HTTP {status}: {text}")));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(format!("HTTP {status}: {text}")));
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| Failure::Fatal(format!("unexpected response body: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| Failure::Fatal("response has no choices".into()))?;
        Ok(choice
            .message
            .and_then(|m| m.content)
            .or(choice.text)
            .unwrap_or_default())
    }
}

impl Backend for HttpChatBackend {
    fn id(&self) -> String {
        format!("http-chat:{}", self.model)
    }

    fn complete(&self, prompt: &Prompt) -> Result<Completion, LlmError> {
        let body = self.request_body(prompt.text());
        let started = Instant::now();
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body) {
                Ok(text) => {
                    return Ok(Completion {
                        text,
                        latency_ms: started.elapsed().as_millis() as u64,
                    })
                }
                Err(Failure::Fatal(message)) => {
                    return Err(LlmError::Transport { attempts, message })
                }
                Err(Failure::Transient(message)) if attempts > self.max_retries => {
                    return Err(LlmError::Transport { attempts, message })
                }
                Err(Failure::Transient(message)) => {
                    let delay = self.backoff.saturating_mul(1 << (attempts - 1).min(16));
                    warn!(attempt = attempts, ?delay, "transient failure: {message}");
                    thread::sleep(delay);
                }
            }
            debug!(attempt = attempts + 1, endpoint = %self.endpoint, "retrying");
        }
    }
}
