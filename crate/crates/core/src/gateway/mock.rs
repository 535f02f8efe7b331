//! Deterministic stand-ins for a real provider.
//!
//! [`MockProvider`] is an in-process [`ChatClient`]. [`MockServer`] speaks
//! the HTTP wire protocol on a loopback port so the real client can be
//! exercised end to end without network access or API keys.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use axum::body::Bytes;
use axum::http::{HeaderMap, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use super::{last_user_text, validate_request, ChatClient, ChatMessage, GatewayError, Role};

pub const DEFAULT_ECHO_PREFIX: &str = "[mock] ";
pub const DEFAULT_FALLBACK: &str = "[mock] Let's work through this together, one step at a time.";

/// Replies with `reply` when the last user message contains `pattern`
/// (case-insensitive).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub pattern: String,
    pub reply: String,
}

impl ScriptEntry {
    pub fn new(pattern: &str, reply: &str) -> Self {
        ScriptEntry {
            pattern: pattern.into(),
            reply: reply.into(),
        }
    }
}

fn scripted<'a>(script: &'a [ScriptEntry], user_text: &str) -> Option<&'a str> {
    let text = user_text.to_lowercase();
    script
        .iter()
        .find(|e| text.contains(&e.pattern.to_lowercase()))
        .map(|e| e.reply.as_str())
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

#[derive(Debug, Default)]
struct ProviderState {
    failures_left: u32,
    calls: u32,
    requests: Vec<Vec<ChatMessage>>,
}

/// In-process provider. Unscripted messages are echoed back after a prefix.
#[derive(Debug)]
pub struct MockProvider {
    name: String,
    prefix: String,
    script: Vec<ScriptEntry>,
    state: Mutex<ProviderState>,
}

impl Default for MockProvider {
    fn default() -> Self {
        MockProvider::new()
    }
}

impl MockProvider {
    pub fn new() -> Self {
        MockProvider {
            name: "mock".into(),
            prefix: DEFAULT_ECHO_PREFIX.into(),
            script: Vec::new(),
            state: Mutex::default(),
        }
    }

    pub fn with_prefix(mut self, prefix: &str) -> Self {
        self.prefix = prefix.into();
        self
    }

    pub fn with_script(mut self, script: Vec<ScriptEntry>) -> Self {
        self.script = script;
        self
    }

    /// Makes the next `n` calls fail with a transport error.
    pub fn fail_next(&self, n: u32) {
        lock(&self.state).failures_left = n;
    }

    pub fn calls(&self) -> u32 {
        lock(&self.state).calls
    }

    /// Every message list received so far, including failed calls.
    pub fn requests(&self) -> Vec<Vec<ChatMessage>> {
        lock(&self.state).requests.clone()
    }

    pub fn reply_for(&self, messages: &[ChatMessage]) -> String {
        let user = last_user_text(messages).unwrap_or("");
        match scripted(&self.script, user) {
            Some(r) => r.to_string(),
            None => format!("{}{}", self.prefix, user),
        }
    }
}

#[async_trait]
impl ChatClient for MockProvider {
    fn provider_name(&self) -> &str {
        &self.name
    }

    async fn complete(&self, messages: &[ChatMessage]) -> Result<ChatMessage, GatewayError> {
        validate_request(messages)?;
        {
            let mut st = lock(&self.state);
            st.calls += 1;
            st.requests.push(messages.to_vec());
            if st.failures_left > 0 {
                st.failures_left -= 1;
                return Err(GatewayError::Transport {
                    attempts: 1,
                    message: "injected failure".into(),
                });
            }
        }
        Ok(ChatMessage::assistant(self.reply_for(messages)))
    }
}

fn default_fallback() -> String {
    DEFAULT_FALLBACK.into()
}

fn default_fail_status() -> u16 {
    503
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockServerConfig {
    #[serde(default)]
    pub script: Vec<ScriptEntry>,
    #[serde(default = "default_fallback")]
    pub fallback: String,
    /// Number of initial requests answered with `fail_status`.
    #[serde(default)]
    pub fail_first: u32,
    #[serde(default = "default_fail_status")]
    pub fail_status: u16,
}

impl Default for MockServerConfig {
    fn default() -> Self {
        MockServerConfig {
            script: Vec::new(),
            fallback: default_fallback(),
            fail_first: 0,
            fail_status: default_fail_status(),
        }
    }
}

/// One request as seen by the mock server.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MockRequest {
    pub path: String,
    pub authorization: Option<String>,
    pub body: Value,
}

#[derive(Debug)]
struct ServerState {
    config: MockServerConfig,
    failures_left: u32,
    served: u64,
    log: Vec<MockRequest>,
}

type Shared = Arc<Mutex<ServerState>>;

pub struct MockServer {
    addr: SocketAddr,
    state: Shared,
    shutdown: Option<oneshot::Sender<()>>,
    task: Option<JoinHandle<()>>,
}

fn error_body(status: StatusCode, message: &str) -> Response {
    (status, Json(json!({"error": {"message": message}}))).into_response()
}

fn well_formed(body: &Value) -> bool {
    body.get("model").is_some_and(Value::is_string)
        && body
            .get("messages")
            .and_then(Value::as_array)
            .is_some_and(|msgs| {
                !msgs.is_empty()
                    && msgs.iter().all(|m| {
                        serde_json::from_value::<ChatMessage>(m.clone()).is_ok()
                    })
            })
}

async fn handle(
    axum::extract::State(state): axum::extract::State<Shared>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let path = uri.path().to_string();
    if method != Method::POST || !path.ends_with("/chat/completions") {
        return error_body(StatusCode::NOT_FOUND, "no such route");
    }
    let parsed: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    let mut st = lock(&state);
    st.log.push(MockRequest {
        path,
        authorization: headers
            .get("authorization")
            .and_then(|v| v.to_str().ok())
            .map(String::from),
        body: parsed.clone(),
    });
    if st.failures_left > 0 {
        st.failures_left -= 1;
        let status = StatusCode::from_u16(st.config.fail_status)
            .unwrap_or(StatusCode::SERVICE_UNAVAILABLE);
        return error_body(status, "injected failure");
    }
    if !well_formed(&parsed) {
        return error_body(StatusCode::BAD_REQUEST, "expected {model, messages}");
    }
    let messages: Vec<ChatMessage> =
        serde_json::from_value(parsed["messages"].clone()).unwrap_or_default();
    let user = last_user_text(&messages).unwrap_or("");
    let content = scripted(&st.config.script, user)
        .unwrap_or(&st.config.fallback)
        .to_string();
    st.served += 1;
    Json(json!({
        "id": format!("mock-{}", st.served),
        "object": "chat.completion",
        "created": 0,
        "model": parsed["model"],
        "choices": [{
            "index": 0,
            "message": {"role": Role::Assistant, "content": content},
            "finish_reason": "stop"
        }]
    }))
    .into_response()
}

impl MockServer {
    /// Starts a server on an ephemeral loopback port.
    pub async fn start(config: MockServerConfig) -> std::io::Result<MockServer> {
        MockServer::bind(SocketAddr::from(([127, 0, 0, 1], 0)), config).await
    }

    pub async fn bind(addr: SocketAddr, config: MockServerConfig) -> std::io::Result<MockServer> {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;
        let state: Shared = Arc::new(Mutex::new(ServerState {
            failures_left: config.fail_first,
            config,
            served: 0,
            log: Vec::new(),
        }));
        let app = Router::new().fallback(handle).with_state(state.clone());
        let (tx, rx) = oneshot::channel::<()>();
        let task = tokio::spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
        Ok(MockServer {
            addr,
            state,
            shutdown: Some(tx),
            task: Some(task),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL with no path, e.g. `http://127.0.0.1:41234`.
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn requests(&self) -> Vec<MockRequest> {
        lock(&self.state).log.clone()
    }

    pub fn clear_requests(&self) {
        lock(&self.state).log.clear();
    }

    pub fn fail_next(&self, n: u32) {
        lock(&self.state).failures_left = n;
    }

    /// Waits until the server task ends; used by the standalone binary.
    pub async fn wait(mut self) {
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}
