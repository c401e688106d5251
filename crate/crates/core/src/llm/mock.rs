//! Scripted local backend speaking the same two routes as a real endpoint.
//!
//! Replies are chosen by the first rule whose substrings all occur in the
//! request's message contents; otherwise the default reply is used. Every
//! request received is recorded, in arrival order.

use std::io;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use url::Url;

use super::{ChatMessage, Role};
use crate::kb::estimate_tokens;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockReply {
    Text(String),
    /// An error status with an OpenAI-style error body.
    Status(u16),
    /// HTTP 200 with a body that is not a chat completion.
    Malformed,
}

impl MockReply {
    pub fn text(s: impl Into<String>) -> Self {
        Self::Text(s.into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockRule {
    pub all_of: Vec<String>,
    pub reply: MockReply,
}

impl MockRule {
    pub fn contains(needle: impl Into<String>, reply: MockReply) -> Self {
        Self {
            all_of: vec![needle.into()],
            reply,
        }
    }

    pub fn all_of<I, S>(needles: I, reply: MockReply) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            all_of: needles.into_iter().map(Into::into).collect(),
            reply,
        }
    }

    fn matches(&self, haystack: &str) -> bool {
        self.all_of.iter().all(|n| haystack.contains(n.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockScript {
    pub rules: Vec<MockRule>,
    pub default_reply: MockReply,
    pub models: Vec<String>,
    /// When set, requests carrying any other bearer token get HTTP 401.
    pub required_api_key: Option<String>,
    /// When true, the models route answers with an unparseable body.
    pub malformed_models: bool,
    /// Delay before every chat completion reply.
    pub latency: Duration,
}

impl Default for MockScript {
    fn default() -> Self {
        Self {
            rules: Vec::new(),
            default_reply: MockReply::text("PONG"),
            models: vec!["mock-a".into(), "mock-b".into()],
            required_api_key: None,
            malformed_models: false,
            latency: Duration::ZERO,
        }
    }
}

impl MockScript {
    pub fn with_default(mut self, reply: MockReply) -> Self {
        self.default_reply = reply;
        self
    }

    pub fn with_rule(mut self, rule: MockRule) -> Self {
        self.rules.push(rule);
        self
    }

    pub fn with_models<I, S>(mut self, models: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.models = models.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn requiring_key(mut self, key: impl Into<String>) -> Self {
        self.required_api_key = Some(key.into());
        self
    }

    fn reply_for(&self, haystack: &str) -> &MockReply {
        self.rules
            .iter()
            .find(|r| r.matches(haystack))
            .map(|r| &r.reply)
            .unwrap_or(&self.default_reply)
    }
}

/// A request as seen by the mock. The bearer token itself is not kept.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordedRequest {
    pub route: String,
    pub authorized: bool,
    pub body: Option<Value>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u64>,
    pub messages: Vec<ChatMessage>,
}

struct Shared {
    script: MockScript,
    log: Mutex<Vec<RecordedRequest>>,
}

impl Shared {
    fn authorized(&self, headers: &HeaderMap) -> bool {
        let Some(required) = &self.script.required_api_key else {
            return true;
        };
        headers
            .get("authorization")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|k| k == required)
    }

    fn record(&self, req: RecordedRequest) {
        self.log.lock().expect("mock log poisoned").push(req);
    }
}

fn error_response(status: u16, message: &str) -> Response {
    let code = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (
        code,
        Json(json!({"error": {"message": message, "type": "mock_error", "code": status}})),
    )
        .into_response()
}

async fn models(State(shared): State<Arc<Shared>>, headers: HeaderMap) -> Response {
    let authorized = shared.authorized(&headers);
    shared.record(RecordedRequest {
        route: "GET /models".into(),
        authorized,
        body: None,
        model: None,
        temperature: None,
        max_tokens: None,
        messages: Vec::new(),
    });
    if !authorized {
        return error_response(401, "invalid api key");
    }
    if shared.script.malformed_models {
        return (StatusCode::OK, "this is not json").into_response();
    }
    let data: Vec<Value> = shared
        .script
        .models
        .iter()
        .map(|id| json!({"id": id, "object": "model", "created": 0, "owned_by": "mock"}))
        .collect();
    Json(json!({"object": "list", "data": data})).into_response()
}

async fn chat(
    State(shared): State<Arc<Shared>>,
    headers: HeaderMap,
    body: axum::body::Bytes,
) -> Response {
    let authorized = shared.authorized(&headers);
    let parsed: Option<Value> = serde_json::from_slice(&body).ok();
    let messages: Vec<ChatMessage> = parsed
        .as_ref()
        .and_then(|v| v.get("messages"))
        .and_then(|m| serde_json::from_value(m.clone()).ok())
        .unwrap_or_default();
    let field = |name: &str| parsed.as_ref().and_then(|v| v.get(name)).cloned();
    shared.record(RecordedRequest {
        route: "POST /chat/completions".into(),
        authorized,
        model: field("model").and_then(|v| v.as_str().map(str::to_string)),
        temperature: field("temperature").and_then(|v| v.as_f64()),
        max_tokens: field("max_tokens").and_then(|v| v.as_u64()),
        body: parsed.clone(),
        messages: messages.clone(),
    });
    if !authorized {
        return error_response(401, "invalid api key");
    }
    if parsed.is_none() || messages.is_empty() {
        return error_response(400, "request body must carry a non-empty messages array");
    }

    if !shared.script.latency.is_zero() {
        tokio::time::sleep(shared.script.latency).await;
    }
    let haystack = messages
        .iter()
        .map(|m| m.content.as_str())
        .collect::<Vec<_>>()
        .join("\n");
    match shared.script.reply_for(&haystack) {
        MockReply::Status(status) => error_response(*status, "scripted failure"),
        MockReply::Malformed => (StatusCode::OK, "{\"choices\": \"nope\"").into_response(),
        MockReply::Text(text) => {
            let prompt_tokens = estimate_tokens(&haystack) as u64;
            let completion_tokens = estimate_tokens(text) as u64;
            Json(json!({
                "id": "chatcmpl-mock",
                "object": "chat.completion",
                "created": 0,
                "model": field("model").unwrap_or(Value::Null),
                "choices": [{
                    "index": 0,
                    "message": {"role": Role::Assistant, "content": text},
                    "finish_reason": "stop"
                }],
                "usage": {
                    "prompt_tokens": prompt_tokens,
                    "completion_tokens": completion_tokens,
                    "total_tokens": prompt_tokens + completion_tokens
                }
            }))
            .into_response()
        }
    }
}

/// Handle to a running mock. The server stops when the handle is dropped.
pub struct MockBackend {
    addr: SocketAddr,
    shared: Arc<Shared>,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<()>,
}

impl MockBackend {
    /// Binds an ephemeral port on 127.0.0.1 and starts serving.
    pub async fn start(script: MockScript) -> io::Result<Self> {
        Self::start_on("127.0.0.1:0".parse().expect("valid address"), script).await
    }

    pub async fn start_on(addr: SocketAddr, script: MockScript) -> io::Result<Self> {
        let listener = TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            script,
            log: Mutex::new(Vec::new()),
        });
        let app = Router::new()
            .route("/v1/models", get(models))
            .route("/v1/chat/completions", post(chat))
            .with_state(shared.clone());
        let (tx, rx) = oneshot::channel::<()>();
        let task = tokio::spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
        Ok(Self {
            addr,
            shared,
            shutdown: Some(tx),
            task,
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL to use as the configured endpoint.
    pub fn endpoint(&self) -> Url {
        Url::parse(&format!("http://{}/v1", self.addr)).expect("valid mock url")
    }

    /// All requests received so far, in arrival order.
    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.shared.log.lock().expect("mock log poisoned").clone()
    }

    pub fn chat_requests(&self) -> Vec<RecordedRequest> {
        self.requests()
            .into_iter()
            .filter(|r| r.route.starts_with("POST"))
            .collect()
    }

    pub fn clear(&self) {
        self.shared.log.lock().expect("mock log poisoned").clear();
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = (&mut self.task).await;
    }
}

impl Drop for MockBackend {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.task.abort();
    }
}
