//! Note classification through a pluggable backend.
//!
//! Two backends exist: an HTTP client for chat-completion servers and the
//! deterministic rule oracle. Both return raw text that goes through
//! [`parse_label`], so the oracle exercises the same parsing path as a model.

mod batch;
mod cache;
mod http;
mod label;
mod oracle;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::Lexicon;
use crate::prompt::Prompt;

pub use batch::{classify_batch, ClassifyJob};
pub use cache::{prompt_digest, CacheEntry, VerdictCache};
pub use http::{ChatRequest, HttpChatBackend};
pub use label::{parse_label, Label};
pub use oracle::{oracle_classify, NEGATION_CUES};

/// Environment variable consulted for the chat server base URL.
pub const BASE_URL_ENV: &str = "PHENO_BASE_URL";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid backend config: {0}")]
    Config(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("note {note_id}: {source}")]
    Note {
        note_id: String,
        #[source]
        source: Box<LlmError>,
    },
    #[error("verdict cache {path}: {message}")]
    Cache { path: String, message: String },
}

impl LlmError {
    /// Whether the root cause is a transport failure.
    pub fn is_transport(&self) -> bool {
        match self {
            Self::Transport { .. } => true,
            Self::Note { source, .. } => source.is_transport(),
            _ => false,
        }
    }
}

/// Parsed model output for one note.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteVerdict {
    pub note_id: String,
    pub label: Label,
    pub raw_response: String,
    pub parse_ok: bool,
    pub backend_id: String,
    #[serde(default)]
    pub latency_ms: u64,
    /// Set when the note carried no lexicon phrase and was never sent.
    #[serde(default)]
    pub skipped: bool,
}

impl NoteVerdict {
    /// Verdict for a note that failed the keyword filter.
    pub fn filtered(note_id: impl Into<String>, backend_id: impl Into<String>) -> Self {
        Self {
            note_id: note_id.into(),
            label: Label::Unknown,
            raw_response: String::new(),
            parse_ok: false,
            backend_id: backend_id.into(),
            latency_ms: 0,
            skipped: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpChat,
    RuleOracle,
}

fn default_max_tokens() -> u32 {
    8
}
fn default_timeout_ms() -> u64 {
    60_000
}
fn default_max_retries() -> u32 {
    3
}
fn default_max_in_flight() -> usize {
    1
}
fn default_backoff_ms() -> u64 {
    250
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default, alias = "model")]
    pub model_name: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    /// First retry delay; doubles on each further attempt.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self::rule_oracle()
    }
}

impl BackendConfig {
    pub fn rule_oracle() -> Self {
        Self {
            kind: BackendKind::RuleOracle,
            base_url: None,
            model_name: None,
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
            max_in_flight: default_max_in_flight(),
            backoff_ms: default_backoff_ms(),
        }
    }

    pub fn http_chat(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::HttpChat,
            base_url: Some(base_url.into()),
            model_name: Some(model_name.into()),
            ..Self::rule_oracle()
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.temperature >= 0.0) {
            return Err(LlmError::Config(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if self.max_in_flight == 0 {
            return Err(LlmError::Config("max_in_flight must be at least 1".into()));
        }
        if self.kind == BackendKind::HttpChat {
            if self.base_url.as_deref().is_none_or(str::is_empty) {
                return Err(LlmError::Config(format!(
                    "http_chat needs base_url (or {BASE_URL_ENV})"
                )));
            }
            if self.model_name.as_deref().is_none_or(str::is_empty) {
                return Err(LlmError::Config("http_chat needs model_name".into()));
            }
        }
        Ok(())
    }

    pub fn backend_id(&self) -> String {
        match self.kind {
            BackendKind::RuleOracle => RuleOracle::ID.to_string(),
            BackendKind::HttpChat => format!(
                "http-chat:{}",
                self.model_name.as_deref().unwrap_or_default()
            ),
        }
    }

    pub fn build(&self, lexicon: &Lexicon) -> Result<Box<dyn Backend>, LlmError> {
        self.validate()?;
        Ok(match self.kind {
            BackendKind::RuleOracle => Box::new(RuleOracle::new(lexicon.clone())),
            BackendKind::HttpChat => Box::new(HttpChatBackend::new(self)?),
        })
    }
}

/// Raw generated text plus how long the backend took.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub latency_ms: u64,
}

pub trait Backend: Send + Sync {
    fn id(&self) -> String;

    /// Produces the raw answer for `prompt`, retrying transient failures
    /// where that makes sense.
    fn complete(&self, prompt: &Prompt) -> Result<Completion, LlmError>;
}

/// Answers with the rule oracle's code for the note region of the prompt.
#[derive(Debug, Clone)]
pub struct RuleOracle {
    lexicon: Lexicon,
}

impl RuleOracle {
    pub const ID: &'static str = "rule-oracle";

    pub fn new(lexicon: Lexicon) -> Self {
        Self { lexicon }
    }
}

impl Backend for RuleOracle {
    fn id(&self) -> String {
        Self::ID.to_string()
    }

    fn complete(&self, prompt: &Prompt) -> Result<Completion, LlmError> {
        let label = oracle_classify(prompt.note_text(), &self.lexicon);
        Ok(Completion {
            text: label.answer(),
            latency_ms: 0,
        })
    }
}

/// Sends one prompt and parses the answer. A response that cannot be read
/// becomes `Unknown` with `parse_ok = false`; only transport failures are
/// errors.
pub fn classify(note_id: &str, prompt: &Prompt, backend: &dyn Backend) -> Result<NoteVerdict, LlmError> {
    let completion = backend.complete(prompt)?;
    let (label, parse_ok) = parse_label(&completion.text);
    Ok(NoteVerdict {
        note_id: note_id.to_string(),
        label,
        raw_response: completion.text,
        parse_ok,
        backend_id: backend.id(),
        latency_ms: completion.latency_ms,
        skipped: false,
    })
}
