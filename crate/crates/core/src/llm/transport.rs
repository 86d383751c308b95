//! Chat-completion transports and the retrying `complete` call.

use std::collections::VecDeque;
use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::PromptBundle;

/// Environment variable read for the endpoint's API key.
pub const API_KEY_ENV: &str = "PAIR_API_KEY";

/// An API key. Never printed, logged or serialized.
#[derive(Clone, PartialEq, Eq)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        Self(key.into())
    }

    pub fn from_env(var: &str) -> Option<Self> {
        std::env::var(var).ok().filter(|k| !k.is_empty()).map(Self)
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(<redacted>)")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpointConfig {
    pub base_url: String,
    pub model_name: String,
    #[serde(skip)]
    pub api_key: Option<ApiKey>,
    #[serde(with = "millis")]
    pub timeout: Duration,
    /// Total attempts per call, including the first.
    pub max_retries: u32,
    pub max_requeries_per_generation: u32,
    #[serde(with = "millis")]
    pub backoff_base: Duration,
}

impl Default for ModelEndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "https://generativelanguage.googleapis.com/v1beta/openai".to_string(),
            model_name: "gemini-2.0-flash-exp".to_string(),
            api_key: None,
            timeout: Duration::from_secs(120),
            max_retries: 4,
            max_requeries_per_generation: 2,
            backoff_base: Duration::from_millis(500),
        }
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("network error: {0}")]
    Network(String),
    #[error("request timed out")]
    Timeout,
    #[error("endpoint returned status {status}: {excerpt}")]
    Api { status: u16, excerpt: String },
    #[error("malformed response body: {0}")]
    Body(String),
    #[error("scripted transport has no replies left")]
    ScriptExhausted,
}

impl TransportError {
    pub fn is_transient(&self) -> bool {
        match self {
            TransportError::Network(_) | TransportError::Timeout => true,
            TransportError::Api { status, .. } => *status == 429 || *status >= 500,
            TransportError::Body(_) | TransportError::ScriptExhausted => false,
        }
    }
}

/// Something that can answer a chat request.
pub trait Transport: Send {
    fn send(&mut self, request: &ChatRequest) -> Result<String, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub retries: u32,
}

fn digest(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

/// Sends one two-message request, retrying transient failures with
/// exponential backoff (`backoff_base * 2^attempt`) for at most
/// `cfg.max_retries` attempts in total.
pub fn complete(
    cfg: &ModelEndpointConfig,
    transport: &mut dyn Transport,
    bundle: &PromptBundle,
    temperature: f64,
) -> Result<Completion, TransportError> {
    let request = ChatRequest {
        model: cfg.model_name.clone(),
        system: bundle.system_text.clone(),
        user: bundle.user_text.clone(),
        temperature,
    };
    let request_digest = digest(&format!("{}\u{0}{}", request.system, request.user));
    let attempts = cfg.max_retries.max(1);
    let mut attempt = 0;
    loop {
        log::debug!(
            "chat request {request_digest} model={} temperature={temperature} attempt={}",
            cfg.model_name,
            attempt + 1
        );
        match transport.send(&request) {
            Ok(text) => {
                log::debug!("chat response {} for request {request_digest} ({} chars)", digest(&text), text.len());
                return Ok(Completion { text, retries: attempt });
            }
            Err(err) => {
                attempt += 1;
                if !err.is_transient() || attempt >= attempts {
                    log::warn!("chat request {request_digest} failed after {attempt} attempt(s): {err}");
                    return Err(err);
                }
                let delay = cfg.backoff_base.saturating_mul(1u32 << (attempt - 1).min(16));
                log::info!("chat request {request_digest} failed ({err}); retrying in {delay:?}");
                if !delay.is_zero() {
                    std::thread::sleep(delay);
                }
            }
        }
    }
}

/// One scripted outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptStep {
    Reply(String),
    Fail(TransportError),
}

/// Offline transport that replays a fixed script and records every request.
///
/// Clones share the script and the log, so a test can keep one handle for
/// inspection while the selector owns another.
#[derive(Debug, Clone, Default)]
pub struct ScriptedTransport {
    inner: Arc<Mutex<ScriptState>>,
}

#[derive(Debug, Default)]
struct ScriptState {
    script: VecDeque<ScriptStep>,
    received: Vec<ChatRequest>,
}

impl ScriptedTransport {
    pub fn new(steps: impl IntoIterator<Item = ScriptStep>) -> Self {
        Self { inner: Arc::new(Mutex::new(ScriptState { script: steps.into_iter().collect(), received: Vec::new() })) }
    }

    /// Script made only of successful replies.
    pub fn replies<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self::new(replies.into_iter().map(|r| ScriptStep::Reply(r.into())))
    }

    pub fn received(&self) -> Vec<ChatRequest> {
        self.inner.lock().expect("script lock").received.clone()
    }

    pub fn remaining(&self) -> usize {
        self.inner.lock().expect("script lock").script.len()
    }
}

pub fn scripted_transport<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> ScriptedTransport {
    ScriptedTransport::replies(replies)
}

impl Transport for ScriptedTransport {
    fn send(&mut self, request: &ChatRequest) -> Result<String, TransportError> {
        let mut state = self.inner.lock().expect("script lock");
        state.received.push(request.clone());
        match state.script.pop_front() {
            Some(ScriptStep::Reply(text)) => Ok(text),
            Some(ScriptStep::Fail(err)) => Err(err),
            None => Err(TransportError::ScriptExhausted),
        }
    }
}

/// OpenAI-compatible `POST {base_url}/chat/completions` over HTTP(S).
pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    api_key: Option<ApiKey>,
}

impl HttpTransport {
    pub fn new(cfg: &ModelEndpointConfig) -> Self {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(cfg.timeout)).http_status_as_error(false).build().into();
        Self {
            agent,
            url: format!("{}/chat/completions", cfg.base_url.trim_end_matches('/')),
            api_key: cfg.api_key.clone(),
        }
    }
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: [WireMessage<'a>; 2],
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireReply,
}

#[derive(Deserialize)]
struct WireReply {
    content: Option<String>,
}

fn excerpt(body: &str) -> String {
    body.chars().take(300).collect()
}

impl Transport for HttpTransport {
    fn send(&mut self, request: &ChatRequest) -> Result<String, TransportError> {
        let body = WireRequest {
            model: &request.model,
            temperature: request.temperature,
            messages: [
                WireMessage { role: "system", content: &request.system },
                WireMessage { role: "user", content: &request.user },
            ],
        };
        let mut call = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {}", key.expose()));
        }
        let payload = serde_json::to_string(&body).map_err(|e| TransportError::Body(e.to_string()))?;
        let mut response = call.send(payload.as_bytes()).map_err(|e| match e {
            ureq::Error::Timeout(_) => TransportError::Timeout,
            other => TransportError::Network(other.to_string()),
        })?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| TransportError::Network(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(TransportError::Api { status, excerpt: excerpt(&text) });
        }
        let parsed: WireResponse =
            serde_json::from_str(&text).map_err(|e| TransportError::Body(format!("{e}: {}", excerpt(&text))))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| TransportError::Body(format!("no message content: {}", excerpt(&text))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(max_retries: u32) -> ModelEndpointConfig {
        ModelEndpointConfig { max_retries, backoff_base: Duration::ZERO, ..ModelEndpointConfig::default() }
    }

    fn bundle() -> PromptBundle {
        PromptBundle { system_text: "sys".into(), user_text: "user".into() }
    }

    #[test]
    fn passes_the_reply_through() {
        let mut t = scripted_transport(["OK"]);
        let c = complete(&cfg(3), &mut t, &bundle(), 1.0).unwrap();
        assert_eq!(c, Completion { text: "OK".into(), retries: 0 });
        let sent = t.received();
        assert_eq!(sent.len(), 1);
        assert_eq!(sent[0].system, "sys");
        assert_eq!(sent[0].user, "user");
        assert_eq!(sent[0].temperature, 1.0);
    }

    #[test]
    fn retries_transient_failures() {
        let mut t = ScriptedTransport::new([
            ScriptStep::Fail(TransportError::Timeout),
            ScriptStep::Fail(TransportError::Network("reset".into())),
            ScriptStep::Reply("fine".into()),
        ]);
        let c = complete(&cfg(5), &mut t, &bundle(), 1.0).unwrap();
        assert_eq!(c.text, "fine");
        assert_eq!(c.retries, 2);
    }

    #[test]
    fn gives_up_after_max_attempts() {
        let mut t = ScriptedTransport::new((0..10).map(|_| ScriptStep::Fail(TransportError::Timeout)));
        let err = complete(&cfg(3), &mut t, &bundle(), 1.0).unwrap_err();
        assert_eq!(err, TransportError::Timeout);
        assert_eq!(t.received().len(), 3);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let mut t = ScriptedTransport::new([
            ScriptStep::Fail(TransportError::Api { status: 401, excerpt: "bad key".into() }),
            ScriptStep::Reply("never".into()),
        ]);
        assert!(matches!(complete(&cfg(5), &mut t, &bundle(), 1.0), Err(TransportError::Api { status: 401, .. })));
        assert_eq!(t.received().len(), 1);
    }

    #[test]
    fn script_plays_in_order_then_runs_dry() {
        let mut t = scripted_transport(["a", "b", "c"]);
        let req = |u: &str| ChatRequest { model: "m".into(), system: "s".into(), user: u.into(), temperature: 0.5 };
        assert_eq!(t.send(&req("1")).unwrap(), "a");
        assert_eq!(t.send(&req("2")).unwrap(), "b");
        assert_eq!(t.send(&req("3")).unwrap(), "c");
        assert_eq!(t.send(&req("4")), Err(TransportError::ScriptExhausted));
        let users: Vec<String> = t.received().into_iter().map(|r| r.user).collect();
        assert_eq!(users, ["1", "2", "3", "4"]);
    }

    #[test]
    fn key_is_never_serialized_or_debug_printed() {
        let mut c = cfg(1);
        c.api_key = Some(ApiKey::new("sk-very-secret"));
        assert!(!serde_json::to_string(&c).unwrap().contains("sk-very-secret"));
        assert!(!format!("{c:?}").contains("sk-very-secret"));
    }
}
