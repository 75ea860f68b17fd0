//! The single egress point for model calls.
//!
//! Every call is keyed by a hash of its semantic content and served from the
//! on-disk cache when possible. Misses go to a [`Transport`] with bounded
//! retries and a cap on concurrent requests, and the response is persisted
//! before it is returned.

mod cache;
mod http;
mod scripted;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use groundkit_core::annotate::{ChatRequest, Completer, Completion, Usage};
use groundkit_core::bench::{ModerationError, Moderator};
use groundkit_core::forecast::{ForecastBackend, ForecastLabel};

pub use cache::{request_key, CacheRecord, DiskCache};
pub use http::HttpTransport;
pub use scripted::{ChatRule, ScoreRule, Script, ScriptedTransport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// Any endpoint speaking the common chat-completions wire shape.
    #[default]
    Openai,
    /// Replies from a local rule file; never touches the network.
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    /// Total attempts including the first.
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 4, backoff_base_ms: 500, max_backoff_ms: 20_000 }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`, doubling from the base.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt.saturating_sub(1)).unwrap_or(u64::MAX);
        Duration::from_millis(self.backoff_base_ms.saturating_mul(factor).min(self.max_backoff_ms))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub provider: ProviderKind,
    pub endpoint: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: Option<String>,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
    pub cache_dir: PathBuf,
    pub offline: bool,
    pub timeout_secs: u64,
    /// Rule file for the scripted provider.
    pub script: Option<PathBuf>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            provider: ProviderKind::Openai,
            endpoint: "https://api.openai.com/v1".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            max_in_flight: 4,
            retry: RetryPolicy::default(),
            cache_dir: PathBuf::from("cache"),
            offline: false,
            timeout_secs: 120,
            script: None,
        }
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_in_flight == 0 {
            return Err(GatewayError::Config("max_in_flight must be at least 1".into()));
        }
        if self.retry.max_attempts == 0 {
            return Err(GatewayError::Config("retry.max_attempts must be at least 1".into()));
        }
        if self.provider == ProviderKind::Scripted && self.script.is_none() {
            return Err(GatewayError::Config("scripted provider needs a script file".into()));
        }
        Ok(())
    }

    /// Resolves relative paths against `base` (the config file's directory).
    pub fn rebase(&mut self, base: &Path) {
        if self.cache_dir.is_relative() {
            self.cache_dir = base.join(&self.cache_dir);
        }
        if let Some(s) = &mut self.script {
            if s.is_relative() {
                *s = base.join(&*s);
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("network: {0}")]
    Network(String),
    #[error("credentials: environment variable {0} is not set")]
    MissingCredentials(String),
    #[error("malformed response: {0}")]
    Decode(String),
    #[error("{0} is not supported by this provider")]
    Unsupported(&'static str),
}

impl TransportError {
    /// Rate limiting, server errors and connection failures.
    pub fn is_transient(&self) -> bool {
        match self {
            TransportError::Status { status, .. } => *status == 429 || *status >= 500,
            TransportError::Network(_) => true,
            _ => false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("offline-cache-miss: no cached response for request {0}")]
    OfflineCacheMiss(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: TransportError },
    #[error(transparent)]
    Transport(TransportError),
    #[error("cache: {0}")]
    Cache(#[from] std::io::Error),
    #[error("invalid gateway configuration: {0}")]
    Config(String),
    #[error("malformed cached response for {0}")]
    CorruptCache(String),
}

/// One chat-completions request in wire form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub model: String,
    pub messages: Vec<WireMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl WireRequest {
    pub fn from_chat(req: &ChatRequest) -> Self {
        WireRequest {
            model: req.model.clone(),
            messages: req
                .messages
                .iter()
                .map(|m| WireMessage { role: m.role.as_str().into(), content: m.content.clone() })
                .collect(),
            temperature: req.temperature,
            max_tokens: req.max_output_tokens,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireUsage {
    #[serde(default)]
    pub prompt_tokens: Option<u64>,
    #[serde(default)]
    pub completion_tokens: Option<u64>,
}

/// What the cache stores for a chat call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireReply {
    pub text: String,
    #[serde(default)]
    pub usage: WireUsage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub task_id: String,
    pub prompt: String,
}

pub trait Transport: Send + Sync {
    fn chat(&self, req: &WireRequest) -> Result<WireReply, TransportError>;

    /// Raw forecast-token scores keyed by label name.
    fn score(&self, _req: &ScoreRequest) -> Result<BTreeMap<String, f64>, TransportError> {
        Err(TransportError::Unsupported("scoring"))
    }

    fn moderate(&self, _text: &str) -> Result<bool, TransportError> {
        Err(TransportError::Unsupported("moderation"))
    }
}

/// Counting semaphore bounding concurrent transport calls.
#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn acquire(&self) {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
    }

    fn release(&self) {
        *self.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.cv.notify_one();
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GatewayStats {
    pub cache_hits: u64,
    pub cache_misses: u64,
    /// Transport calls, including retries.
    pub attempts: u64,
    pub peak_in_flight: usize,
}

#[derive(Debug, Default)]
struct Counters {
    cache_hits: AtomicU64,
    cache_misses: AtomicU64,
    attempts: AtomicU64,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
}

pub struct Gateway {
    config: GatewayConfig,
    cache: DiskCache,
    transport: Box<dyn Transport>,
    slots: Slots,
    counters: Counters,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("config", &self.config).finish_non_exhaustive()
    }
}

impl Gateway {
    /// Builds the transport named by the config.
    pub fn new(config: GatewayConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let transport: Box<dyn Transport> = match config.provider {
            ProviderKind::Openai => Box::new(HttpTransport::new(&config)),
            ProviderKind::Scripted => {
                let path = config.script.as_ref().expect("validated");
                Box::new(ScriptedTransport::new(Script::load(path).map_err(|e| GatewayError::Config(e.to_string()))?))
            }
        };
        Self::with_transport(config, transport)
    }

    pub fn with_transport(config: GatewayConfig, transport: Box<dyn Transport>) -> Result<Self, GatewayError> {
        config.validate()?;
        Ok(Gateway {
            cache: DiskCache::new(config.cache_dir.clone()),
            slots: Slots { free: Mutex::new(config.max_in_flight), cv: Condvar::new() },
            transport,
            config,
            counters: Counters::default(),
        })
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            cache_hits: self.counters.cache_hits.load(Ordering::SeqCst),
            cache_misses: self.counters.cache_misses.load(Ordering::SeqCst),
            attempts: self.counters.attempts.load(Ordering::SeqCst),
            peak_in_flight: self.counters.peak_in_flight.load(Ordering::SeqCst),
        }
    }

    /// Cache-first call. On a miss the transport is tried up to
    /// `retry.max_attempts` times, backing off on transient failures.
    fn cached<F>(&self, kind: &str, request: serde_json::Value, call: F) -> Result<serde_json::Value, GatewayError>
    where
        F: Fn(&dyn Transport) -> Result<serde_json::Value, TransportError>,
    {
        let key = request_key(kind, &request);
        if let Some(rec) = self.cache.get(&key)? {
            self.counters.cache_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(rec.response);
        }
        self.counters.cache_misses.fetch_add(1, Ordering::SeqCst);
        if self.config.offline {
            return Err(GatewayError::OfflineCacheMiss(key));
        }

        let mut attempt = 0;
        let response = loop {
            attempt += 1;
            let result = self.attempt(|| call(self.transport.as_ref()));
            match result {
                Ok(v) => break v,
                Err(e) if e.is_transient() && attempt < self.config.retry.max_attempts => {
                    log::warn!("{kind} request {key}: attempt {attempt} failed ({e}); retrying");
                    std::thread::sleep(self.config.retry.backoff(attempt));
                }
                Err(e) if e.is_transient() => {
                    return Err(GatewayError::RetriesExhausted { attempts: attempt, last: e })
                }
                Err(e) => return Err(GatewayError::Transport(e)),
            }
        };
        self.cache.put(&CacheRecord { request_key: key, kind: kind.into(), request, response: response.clone() })?;
        Ok(response)
    }

    fn attempt<T>(&self, f: impl FnOnce() -> T) -> T {
        self.slots.acquire();
        let now = self.counters.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.counters.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        self.counters.attempts.fetch_add(1, Ordering::SeqCst);
        let out = f();
        self.counters.in_flight.fetch_sub(1, Ordering::SeqCst);
        self.slots.release();
        out
    }

    pub fn chat(&self, req: &ChatRequest) -> Result<WireReply, GatewayError> {
        let wire = WireRequest::from_chat(req);
        let value = serde_json::to_value(&wire).expect("wire request serializes");
        let response = self.cached("chat", value.clone(), |t| {
            t.chat(&wire).map(|r| serde_json::to_value(r).expect("wire reply serializes"))
        })?;
        serde_json::from_value(response).map_err(|_| GatewayError::CorruptCache(request_key("chat", &value)))
    }

    pub fn score(&self, task_id: &str, prompt: &str) -> Result<BTreeMap<String, f64>, GatewayError> {
        let req = ScoreRequest { task_id: task_id.into(), prompt: prompt.into() };
        let value = serde_json::to_value(&req).expect("score request serializes");
        let response = self.cached("score", value.clone(), |t| t.score(&req).map(|s| serde_json::json!(s)))?;
        serde_json::from_value(response).map_err(|_| GatewayError::CorruptCache(request_key("score", &value)))
    }

    pub fn moderate(&self, text: &str) -> Result<bool, GatewayError> {
        let value = serde_json::json!({ "input": text });
        let response = self
            .cached("moderation", value.clone(), |t| t.moderate(text).map(|f| serde_json::json!({ "flagged": f })))?;
        response
            .get("flagged")
            .and_then(serde_json::Value::as_bool)
            .ok_or_else(|| GatewayError::CorruptCache(request_key("moderation", &value)))
    }
}

impl Completer for Gateway {
    type Error = GatewayError;

    fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        let reply = self.chat(request)?;
        Ok(Completion {
            text: reply.text,
            usage: Usage { prompt_tokens: reply.usage.prompt_tokens, completion_tokens: reply.usage.completion_tokens },
        })
    }
}

impl Moderator for Gateway {
    fn flagged(&self, text: &str) -> Result<bool, ModerationError> {
        self.moderate(text).map_err(|e| ModerationError(e.to_string()))
    }
}

/// Forecast scores served through a gateway's `score` endpoint.
#[derive(Debug)]
pub struct RemoteForecaster<'a>(pub &'a Gateway);

impl ForecastBackend for RemoteForecaster<'_> {
    type Error = GatewayError;

    fn scores(&self, task_id: &str, instruction: &str) -> Result<BTreeMap<ForecastLabel, f64>, GatewayError> {
        let raw = self.0.score(task_id, instruction)?;
        let mut out = BTreeMap::new();
        for (name, v) in raw {
            let label = name.parse::<ForecastLabel>().map_err(|_| {
                GatewayError::Transport(TransportError::Decode(format!("unknown forecast label {name:?}")))
            })?;
            out.insert(label, v);
        }
        Ok(out)
    }
}
