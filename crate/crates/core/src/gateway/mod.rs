//! Provider-agnostic chat completion over the OpenAI-compatible wire format.
//!
//! Providers differ only by a [`ProviderConfig`] entry. The single client,
//! [`OpenAiCompatClient`], posts `{model, messages}` to
//! `{base_url}/chat/completions` and reads `choices[0].message`.

pub mod mock;

use std::fmt;
use std::path::Path;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub use mock::{MockProvider, MockRequest, MockServer, MockServerConfig, ScriptEntry};

const SHIPPED_PROVIDERS: &str = include_str!("../../data/providers.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        ChatMessage {
            role,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage::new(Role::Assistant, content)
    }
}

/// Checks the shape every request must have: at least one message, and the
/// system prompt first.
pub fn validate_request(messages: &[ChatMessage]) -> Result<(), GatewayError> {
    match messages.first() {
        None => Err(GatewayError::Precondition("request has no messages".into())),
        Some(m) if m.role != Role::System => Err(GatewayError::Precondition(format!(
            "first message must be the system prompt, got role '{}'",
            m.role.as_str()
        ))),
        Some(_) => Ok(()),
    }
}

/// Text of the most recent user message, if any.
pub fn last_user_text(messages: &[ChatMessage]) -> Option<&str> {
    messages
        .iter()
        .rev()
        .find(|m| m.role == Role::User)
        .map(|m| m.content.as_str())
}

fn default_timeout_secs() -> u64 {
    30
}

fn default_max_retries() -> u32 {
    2
}

fn default_backoff_ms() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub name: String,
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the API key. `None` sends no
    /// `Authorization` header (local servers).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Extra attempts after the first one fails transiently.
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Delay before the first retry; doubles on each further retry.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

impl ProviderConfig {
    /// Config for a local server that needs no key, such as [`MockServer`].
    pub fn local(name: &str, base_url: &str) -> Self {
        ProviderConfig {
            name: name.into(),
            base_url: base_url.into(),
            model: "mock-model".into(),
            api_key_env: None,
            timeout_secs: 5,
            max_retries: default_max_retries(),
            backoff_ms: 10,
        }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |why: String| Err(GatewayError::Config(format!("provider '{}': {why}", self.name)));
        if self.name.trim().is_empty() {
            return Err(GatewayError::Config("provider name is empty".into()));
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return bad(format!("base_url '{}' is not an http(s) URL", self.base_url));
        }
        if self.model.trim().is_empty() {
            return bad("model is empty".into());
        }
        if self.timeout_secs == 0 {
            return bad("timeout_secs must be positive".into());
        }
        if matches!(&self.api_key_env, Some(v) if v.trim().is_empty()) {
            return bad("api_key_env is empty".into());
        }
        Ok(())
    }

    /// Backoff before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u64 << (retry.saturating_sub(1)).min(16);
        Duration::from_millis(self.backoff_ms.saturating_mul(factor))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ProviderCatalog {
    #[serde(default, rename = "provider")]
    pub providers: Vec<ProviderConfig>,
}

impl ProviderCatalog {
    /// The seven providers bundled with the engine.
    pub fn shipped() -> Self {
        ProviderCatalog::from_toml_str(SHIPPED_PROVIDERS).expect("bundled providers are valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, GatewayError> {
        let catalog: ProviderCatalog =
            toml::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))?;
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn from_path(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        ProviderCatalog::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.providers {
            p.validate()?;
            if !seen.insert(p.name.as_str()) {
                return Err(GatewayError::Config(format!("duplicate provider '{}'", p.name)));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ProviderConfig> {
        self.providers.iter().find(|p| p.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.providers.iter().map(|p| p.name.as_str()).collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    Precondition(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("provider '{provider}' needs an API key in ${env}")]
    MissingKey { provider: String, env: String },
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider rejected the request with HTTP {status}")]
    Rejected { status: u16 },
    #[error("malformed provider response: {0}")]
    Protocol(String),
}

impl GatewayError {
    /// Whether a later retry by the caller could succeed.
    pub fn is_transient(&self) -> bool {
        matches!(self, GatewayError::Transport { .. })
    }
}

#[async_trait]
pub trait ChatClient: Send + Sync {
    fn provider_name(&self) -> &str;

    /// Sends `messages` and returns the assistant's reply.
    async fn complete(&self, messages: &[ChatMessage]) -> Result<ChatMessage, GatewayError>;
}

/// Builds the request body. Only `model` and `messages` are sent.
pub fn request_body(model: &str, messages: &[ChatMessage]) -> Value {
    json!({ "model": model, "messages": messages })
}

/// Extracts `choices[0].message` from a response body.
pub fn parse_response(body: &Value) -> Result<ChatMessage, GatewayError> {
    let message = body
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .ok_or_else(|| GatewayError::Protocol("missing choices[0].message".into()))?;
    let content = message
        .get("content")
        .and_then(Value::as_str)
        .ok_or_else(|| GatewayError::Protocol("choices[0].message.content is not a string".into()))?;
    let role = match message.get("role") {
        None => Role::Assistant,
        Some(r) => serde_json::from_value(r.clone())
            .map_err(|_| GatewayError::Protocol(format!("unknown role {r}")))?,
    };
    Ok(ChatMessage::new(role, content))
}

enum Attempt {
    Done(ChatMessage),
    Retry(String),
    Fail(GatewayError),
}

/// The one client used for every configured provider.
pub struct OpenAiCompatClient {
    config: ProviderConfig,
    api_key: Option<String>,
    http: reqwest::Client,
}

impl fmt::Debug for OpenAiCompatClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OpenAiCompatClient")
            .field("config", &self.config)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl OpenAiCompatClient {
    /// Reads the key from the process environment.
    pub fn new(config: ProviderConfig) -> Result<Self, GatewayError> {
        OpenAiCompatClient::with_key_lookup(config, |var| std::env::var(var).ok())
    }

    /// Resolves the key through `lookup` instead of the environment.
    pub fn with_key_lookup(
        config: ProviderConfig,
        lookup: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, GatewayError> {
        config.validate()?;
        let api_key = match &config.api_key_env {
            None => None,
            Some(var) => match lookup(var) {
                Some(key) if !key.trim().is_empty() => Some(key),
                _ => {
                    return Err(GatewayError::MissingKey {
                        provider: config.name.clone(),
                        env: var.clone(),
                    })
                }
            },
        };
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| GatewayError::Config(format!("http client: {e}")))?;
        Ok(OpenAiCompatClient {
            config,
            api_key,
            http,
        })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    async fn attempt(&self, body: &Value) -> Attempt {
        let mut req = self.http.post(self.config.endpoint()).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send().await {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(describe_reqwest(e)),
        };
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Attempt::Retry(format!("HTTP {}", status.as_u16()));
        }
        if !status.is_success() {
            return Attempt::Fail(GatewayError::Rejected {
                status: status.as_u16(),
            });
        }
        match resp.json::<Value>().await {
            Ok(v) => match parse_response(&v) {
                Ok(m) => Attempt::Done(m),
                Err(e) => Attempt::Fail(e),
            },
            Err(e) if e.is_decode() => Attempt::Fail(GatewayError::Protocol(describe_reqwest(e))),
            Err(e) => Attempt::Retry(describe_reqwest(e)),
        }
    }
}

// reqwest errors can embed the request URL; keep the message short and keyless.
fn describe_reqwest(e: reqwest::Error) -> String {
    if e.is_timeout() {
        "request timed out".into()
    } else if e.is_connect() {
        "could not connect".into()
    } else if e.is_decode() {
        "response body is not valid JSON".into()
    } else {
        e.without_url().to_string()
    }
}

#[async_trait]
impl ChatClient for OpenAiCompatClient {
    fn provider_name(&self) -> &str {
        &self.config.name
    }

    async fn complete(&self, messages: &[ChatMessage]) -> Result<ChatMessage, GatewayError> {
        validate_request(messages)?;
        let body = request_body(&self.config.model, messages);
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for n in 1..=attempts {
            if n > 1 {
                tokio::time::sleep(self.config.backoff(n - 1)).await;
            }
            match self.attempt(&body).await {
                Attempt::Done(m) => return Ok(m),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(why) => {
                    tracing::warn!(provider = %self.config.name, attempt = n, "{why}");
                    last = why;
                }
            }
        }
        Err(GatewayError::Transport {
            attempts,
            message: last,
        })
    }
}
