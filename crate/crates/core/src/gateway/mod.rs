//! Text-generation gateway: fixed decoding parameters, a persistent
//! content-addressed completion cache, retries with exponential backoff, a
//! shared rate limit and an in-flight bound.

pub mod cache;
pub mod http;
pub mod limiter;
pub mod mock;

use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompt::RenderedPrompt;
pub use cache::{CacheRecord, CompletionCache};
pub use http::{HttpProfile, HttpProvider};
pub use limiter::{InFlight, RateLimiter};
pub use mock::{MockProvider, ReplayProvider};

pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 1024;
pub const DEFAULT_MAX_RETRIES: u32 = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("credential environment variable {0} is not set")]
    AuthMissing(String),
    #[error("rate limited by provider")]
    RateLimited,
    #[error("provider returned HTTP {status}: {message}")]
    ProviderError { status: u16, message: String },
    #[error("request timed out")]
    Timeout,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("unusable provider response: {0}")]
    BadResponse(String),
    #[error("replay provider has no cached completion for this request")]
    ReplayMiss,
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("cache i/o: {0}")]
    Cache(String),
}

impl GatewayError {
    pub fn is_transient(&self) -> bool {
        match self {
            GatewayError::RateLimited | GatewayError::Timeout | GatewayError::Transport(_) => true,
            GatewayError::ProviderError { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: u32,
    pub max_output_tokens: u32,
    pub provider_model: String,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            temperature: 0.1,
            top_p: 1.0,
            top_k: 1,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            provider_model: "gemini-1.0-pro".into(),
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(format!("top_p must be in (0, 1], got {}", self.top_p));
        }
        if self.top_k < 1 {
            return Err("top_k must be >= 1".into());
        }
        if self.max_output_tokens < 1 {
            return Err("max_output_tokens must be >= 1".into());
        }
        if self.provider_model.trim().is_empty() {
            return Err("provider_model must be set".into());
        }
        Ok(())
    }
}

/// SHA-256 over a canonical JSON encoding of prompt, decoding params and model, as lowercase hex.
pub fn cache_key(prompt_text: &str, params: &GenerationParams, provider_model: &str) -> String {
    #[derive(Serialize)]
    struct KeyMaterial<'a> {
        v: u32,
        prompt: &'a str,
        temperature: f64,
        top_p: f64,
        top_k: u32,
        max_output_tokens: u32,
        provider_model: &'a str,
    }
    let material = KeyMaterial {
        v: 1,
        prompt: prompt_text,
        temperature: params.temperature,
        top_p: params.top_p,
        top_k: params.top_k,
        max_output_tokens: params.max_output_tokens,
        provider_model,
    };
    let bytes = serde_json::to_vec(&material).expect("key material serializes");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub prompt_hash: String,
    pub text: String,
    pub attempts: u32,
    pub from_cache: bool,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Backoff {
    pub initial_ms: u64,
    pub factor: f64,
    pub max_ms: u64,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            initial_ms: 500,
            factor: 2.0,
            max_ms: 8_000,
        }
    }
}

impl Backoff {
    pub fn none() -> Self {
        Self {
            initial_ms: 0,
            factor: 1.0,
            max_ms: 0,
        }
    }

    /// Delay before retry number `retry` (1-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let ms = self.initial_ms as f64 * self.factor.powi(retry.saturating_sub(1) as i32);
        Duration::from_millis(ms.min(self.max_ms as f64) as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockMode {
    /// Always reply with `answer`.
    Constant,
    /// Reply with the gold option of the target question.
    Gold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockProfile {
    pub mode: MockMode,
    #[serde(default)]
    pub answer: Option<String>,
    #[serde(default)]
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileKind {
    Http(Box<HttpProfile>),
    Mock(MockProfile),
    Replay,
}

/// A named provider configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderProfile {
    #[serde(flatten)]
    pub kind: ProfileKind,
    /// Model identifier for runs on this profile; replaces `params.provider_model`.
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default = "default_rpm")]
    pub rpm: u32,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub backoff: Backoff,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
}

fn default_rpm() -> u32 {
    60
}

fn default_max_retries() -> u32 {
    DEFAULT_MAX_RETRIES
}

fn default_max_in_flight() -> usize {
    4
}

impl ProviderProfile {
    pub fn new(kind: ProfileKind) -> Self {
        Self {
            kind,
            model: None,
            rpm: default_rpm(),
            max_retries: default_max_retries(),
            backoff: Backoff::default(),
            max_in_flight: default_max_in_flight(),
        }
    }

    pub fn replay() -> Self {
        Self::new(ProfileKind::Replay)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.rpm == 0 {
            return Err("rpm must be positive".into());
        }
        if self.max_in_flight == 0 {
            return Err("max_in_flight must be positive".into());
        }
        if let ProfileKind::Mock(m) = &self.kind {
            if m.mode == MockMode::Constant && m.answer.is_none() {
                return Err("constant mock needs an `answer`".into());
            }
        }
        Ok(())
    }
}

pub trait TextProvider: Send + Sync {
    fn name(&self) -> &str;

    /// False for providers that never leave the process (replay).
    fn is_network(&self) -> bool {
        true
    }

    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String, GatewayError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub backoff: Backoff,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayStats {
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub provider_calls: u64,
}

#[derive(Default)]
struct Counters {
    cache_hits: AtomicU64,
    cache_misses: AtomicU64,
    provider_calls: AtomicU64,
}

pub struct Gateway {
    provider: Arc<dyn TextProvider>,
    cache: Option<CompletionCache>,
    limiter: RateLimiter,
    in_flight: InFlight,
    retry: RetryPolicy,
    pending: Mutex<HashSet<String>>,
    pending_done: Condvar,
    counters: Counters,
}

impl Gateway {
    pub fn new(
        provider: Arc<dyn TextProvider>,
        cache: Option<CompletionCache>,
        limiter: RateLimiter,
        max_in_flight: usize,
        retry: RetryPolicy,
    ) -> Self {
        Self {
            provider,
            cache,
            limiter,
            in_flight: InFlight::new(max_in_flight),
            retry,
            pending: Mutex::new(HashSet::new()),
            pending_done: Condvar::new(),
            counters: Counters::default(),
        }
    }

    /// Gateway with the profile's limits around an already-built provider.
    pub fn from_profile(
        provider: Arc<dyn TextProvider>,
        profile: &ProviderProfile,
        cache: Option<CompletionCache>,
    ) -> Self {
        Self::new(
            provider,
            cache,
            RateLimiter::per_minute(profile.rpm),
            profile.max_in_flight,
            RetryPolicy {
                max_retries: profile.max_retries,
                backoff: profile.backoff,
            },
        )
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    pub fn max_in_flight(&self) -> usize {
        self.in_flight.limit()
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            cache_hits: self.counters.cache_hits.load(Ordering::SeqCst),
            cache_misses: self.counters.cache_misses.load(Ordering::SeqCst),
            provider_calls: self.counters.provider_calls.load(Ordering::SeqCst),
        }
    }

    pub fn generate(&self, prompt: &RenderedPrompt, params: &GenerationParams) -> Result<Completion, GatewayError> {
        self.generate_text(&prompt.text, params)
    }

    pub fn generate_text(&self, prompt: &str, params: &GenerationParams) -> Result<Completion, GatewayError> {
        let key = cache_key(prompt, params, &params.provider_model);
        self.generate_keyed(prompt, params, key)
    }

    /// Like [`generate_text`](Self::generate_text) but cached under a key salted
    /// with `salt`, so a repeated request is not answered by the earlier completion.
    pub fn generate_salted(&self, prompt: &str, params: &GenerationParams, salt: &str) -> Result<Completion, GatewayError> {
        let base = cache_key(prompt, params, &params.provider_model);
        let key = hex::encode(Sha256::digest(format!("{base}\u{0}{salt}").as_bytes()));
        self.generate_keyed(prompt, params, key)
    }

    fn generate_keyed(&self, prompt: &str, params: &GenerationParams, key: String) -> Result<Completion, GatewayError> {
        if prompt.trim().is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        let started = Instant::now();
        if let Some(hit) = self.cached(&key)? {
            return Ok(self.hit(key, hit, started));
        }
        // One request per key at a time; later callers wait and re-read the cache.
        let _claim = self.claim(&key);
        if let Some(hit) = self.cached(&key)? {
            return Ok(self.hit(key, hit, started));
        }
        self.counters.cache_misses.fetch_add(1, Ordering::SeqCst);

        let _permit = self.in_flight.acquire();
        let mut attempts = 0;
        let text = loop {
            attempts += 1;
            self.limiter.acquire();
            self.counters.provider_calls.fetch_add(1, Ordering::SeqCst);
            match self.provider.complete(prompt, params) {
                Ok(text) => break text,
                Err(e) if e.is_transient() && attempts <= self.retry.max_retries => {
                    log::debug!("attempt {attempts} failed ({e}); retrying");
                    thread::sleep(self.retry.backoff.delay(attempts));
                }
                Err(e) => return Err(e),
            }
        };
        if let Some(cache) = &self.cache {
            let record = CacheRecord {
                key: key.clone(),
                prompt: prompt.to_string(),
                params: params.clone(),
                provider_model: params.provider_model.clone(),
                response: text.clone(),
                created_at: chrono::Utc::now().to_rfc3339(),
            };
            cache.put(&record).map_err(|e| GatewayError::Cache(e.to_string()))?;
        }
        Ok(Completion {
            prompt_hash: key,
            text,
            attempts,
            from_cache: false,
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }

    fn cached(&self, key: &str) -> Result<Option<CacheRecord>, GatewayError> {
        match &self.cache {
            Some(cache) => cache.get(key).map_err(|e| GatewayError::Cache(e.to_string())),
            None => Ok(None),
        }
    }

    fn hit(&self, key: String, record: CacheRecord, started: Instant) -> Completion {
        self.counters.cache_hits.fetch_add(1, Ordering::SeqCst);
        Completion {
            prompt_hash: key,
            text: record.response,
            attempts: 1,
            from_cache: true,
            latency_ms: started.elapsed().as_millis() as u64,
        }
    }

    fn claim(&self, key: &str) -> KeyClaim<'_> {
        let mut pending = self.pending.lock().unwrap();
        while pending.contains(key) {
            pending = self.pending_done.wait(pending).unwrap();
        }
        pending.insert(key.to_string());
        KeyClaim {
            gateway: self,
            key: key.to_string(),
        }
    }
}

struct KeyClaim<'a> {
    gateway: &'a Gateway,
    key: String,
}

impl Drop for KeyClaim<'_> {
    fn drop(&mut self) {
        self.gateway.pending.lock().unwrap().remove(&self.key);
        self.gateway.pending_done.notify_all();
    }
}
