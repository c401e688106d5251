//! OpenAI-compatible chat-completion client.
//!
//! Two routes are used: `GET <endpoint>/models` and
//! `POST <endpoint>/chat/completions`, both with a bearer token. Responses are
//! consumed whole; there is no streaming and no automatic retry.

mod mock;

use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

pub use mock::{MockBackend, MockReply, MockRule, MockScript, RecordedRequest};

/// Environment variable whose value replaces any configured API key.
pub const API_KEY_ENV: &str = "AOP_SMART_API_KEY";

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 4096;

/// Bearer credential. Never printed: `Debug` is redacted and there is no
/// `Display` or `Serialize`.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        Self(key.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Replaces any occurrence of the key in `text`.
    pub fn redact(&self, text: &str) -> String {
        if self.0.is_empty() {
            text.to_string()
        } else {
            text.replace(&self.0, "***")
        }
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(***)")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("endpoint is not an absolute http(s) URL: {0}")]
    Endpoint(String),
    #[error("temperature must be within [0, 2], got {0}")]
    Temperature(f64),
    #[error("max output tokens must be at least 1")]
    MaxOutputTokens,
    #[error("model id is empty")]
    EmptyModel,
}

/// Backend endpoint, credentials and generation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmConfig {
    endpoint: Url,
    api_key: ApiKey,
    model_id: String,
    max_output_tokens: u32,
    temperature: f64,
    timeout: Duration,
}

impl LlmConfig {
    /// Defaults: temperature 0, [`DEFAULT_MAX_OUTPUT_TOKENS`], [`DEFAULT_TIMEOUT`].
    pub fn new(
        endpoint: &str,
        api_key: ApiKey,
        model_id: impl Into<String>,
    ) -> Result<Self, ConfigError> {
        let parsed =
            Url::parse(endpoint.trim()).map_err(|_| ConfigError::Endpoint(endpoint.to_string()))?;
        if !matches!(parsed.scheme(), "http" | "https") || parsed.cannot_be_a_base() {
            return Err(ConfigError::Endpoint(endpoint.to_string()));
        }
        Ok(Self {
            endpoint: parsed,
            api_key,
            model_id: model_id.into(),
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            temperature: 0.0,
            timeout: DEFAULT_TIMEOUT,
        })
    }

    pub fn with_temperature(mut self, temperature: f64) -> Result<Self, ConfigError> {
        if !(0.0..=2.0).contains(&temperature) {
            return Err(ConfigError::Temperature(temperature));
        }
        self.temperature = temperature;
        Ok(self)
    }

    pub fn with_max_output_tokens(mut self, tokens: u32) -> Result<Self, ConfigError> {
        if tokens == 0 {
            return Err(ConfigError::MaxOutputTokens);
        }
        self.max_output_tokens = tokens;
        Ok(self)
    }

    pub fn with_model(mut self, model_id: impl Into<String>) -> Self {
        self.model_id = model_id.into();
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_api_key(mut self, key: ApiKey) -> Self {
        self.api_key = key;
        self
    }

    /// Applies [`API_KEY_ENV`] when it is set and non-empty.
    pub fn with_env_override(self) -> Self {
        match std::env::var(API_KEY_ENV) {
            Ok(key) if !key.is_empty() => self.with_api_key(ApiKey::new(key)),
            _ => self,
        }
    }

    pub fn endpoint(&self) -> &Url {
        &self.endpoint
    }

    pub fn api_key(&self) -> &ApiKey {
        &self.api_key
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn max_output_tokens(&self) -> u32 {
        self.max_output_tokens
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    fn route(&self, path: &str) -> String {
        format!("{}/{path}", self.endpoint.as_str().trim_end_matches('/'))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

/// One request/response round trip.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub request_messages: Vec<ChatMessage>,
    pub response_text: String,
    pub usage: Option<Usage>,
    /// Wall-clock time; not serialized so transcripts stay reproducible.
    #[serde(skip)]
    pub latency: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatewayErrorKind {
    Network,
    Credential,
    Protocol,
    RetryableOverload,
}

impl fmt::Display for GatewayErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Network => "network error",
            Self::Credential => "credential error",
            Self::Protocol => "protocol error",
            Self::RetryableOverload => "backend overloaded",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("network error: {0}")]
    Network(String),
    #[error("credential rejected by backend (HTTP {status})")]
    Credential { status: u16 },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("backend overloaded or rate limited (HTTP {status})")]
    Overloaded { status: u16 },
}

impl GatewayError {
    pub fn kind(&self) -> GatewayErrorKind {
        match self {
            Self::Network(_) => GatewayErrorKind::Network,
            Self::Credential { .. } => GatewayErrorKind::Credential,
            Self::Protocol(_) => GatewayErrorKind::Protocol,
            Self::Overloaded { .. } => GatewayErrorKind::RetryableOverload,
        }
    }

    pub fn is_retryable(&self) -> bool {
        matches!(self, Self::Overloaded { .. })
    }
}

fn classify_status(status: u16, body: &str) -> GatewayError {
    match status {
        401 | 403 => GatewayError::Credential { status },
        408 | 429 | 502 | 503 | 504 | 529 => GatewayError::Overloaded { status },
        _ => {
            let excerpt: String = body.chars().take(200).collect();
            GatewayError::Protocol(format!("unexpected HTTP {status}: {excerpt}"))
        }
    }
}

#[derive(Serialize)]
struct ChatRequestBody<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
    stream: bool,
}

#[derive(Deserialize)]
struct ChatResponseBody {
    choices: Vec<ChoiceBody>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct ChoiceBody {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct ModelList {
    data: Vec<ModelEntry>,
}

#[derive(Deserialize)]
struct ModelEntry {
    id: String,
}

/// Stateless HTTP client; cheap to clone and share.
#[derive(Debug, Clone, Default)]
pub struct LlmClient {
    http: reqwest::Client,
}

impl LlmClient {
    pub fn new() -> Self {
        Self::default()
    }

    async fn send(
        &self,
        config: &LlmConfig,
        request: reqwest::RequestBuilder,
    ) -> Result<String, GatewayError> {
        let key = config.api_key();
        let response = request
            .bearer_auth(key.expose())
            .timeout(config.timeout())
            .send()
            .await
            .map_err(|e| GatewayError::Network(key.redact(&e.to_string())))?;
        let status = response.status().as_u16();
        let body = response
            .text()
            .await
            .map_err(|e| GatewayError::Network(key.redact(&e.to_string())))?;
        if !(200..300).contains(&status) {
            return Err(match classify_status(status, &body) {
                GatewayError::Protocol(m) => GatewayError::Protocol(key.redact(&m)),
                other => other,
            });
        }
        Ok(body)
    }

    /// Lists model ids in the order the backend returns them.
    pub async fn fetch_models(&self, config: &LlmConfig) -> Result<Vec<String>, GatewayError> {
        let body = self
            .send(config, self.http.get(config.route("models")))
            .await?;
        let list: ModelList = serde_json::from_str(&body)
            .map_err(|e| GatewayError::Protocol(format!("cannot parse model list: {e}")))?;
        Ok(list.data.into_iter().map(|m| m.id).collect())
    }

    /// Sends `messages` and returns the first choice's content.
    pub async fn chat_complete(
        &self,
        config: &LlmConfig,
        messages: &[ChatMessage],
    ) -> Result<ChatExchange, GatewayError> {
        if messages.is_empty() {
            return Err(GatewayError::Protocol("no messages to send".into()));
        }
        let body = ChatRequestBody {
            model: config.model_id(),
            messages,
            temperature: config.temperature(),
            max_tokens: config.max_output_tokens(),
            stream: false,
        };
        let started = Instant::now();
        let text = self
            .send(
                config,
                self.http.post(config.route("chat/completions")).json(&body),
            )
            .await?;
        let latency = started.elapsed();
        let parsed: ChatResponseBody = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Protocol(format!("cannot parse chat completion: {e}")))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| GatewayError::Protocol("response has no choices".into()))?
            .message
            .content
            .ok_or_else(|| GatewayError::Protocol("first choice has no content".into()))?;
        Ok(ChatExchange {
            request_messages: messages.to_vec(),
            response_text: content,
            usage: parsed.usage,
            latency,
        })
    }
}
