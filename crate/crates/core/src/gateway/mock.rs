//! Scripted and replay-only providers, plus call instrumentation for tests.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use super::{GatewayError, GenerationParams, TextProvider};

type Script = dyn Fn(&str, &GenerationParams, usize) -> Result<String, GatewayError> + Send + Sync;

/// Answers from a closure; records call count, peak concurrency and call start times.
pub struct MockProvider {
    name: String,
    script: Box<Script>,
    latency: Duration,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
    starts: Mutex<Vec<Instant>>,
}

impl MockProvider {
    /// `script` receives the prompt, the params and the 0-based global call index.
    pub fn from_fn<F>(name: impl Into<String>, script: F) -> Self
    where
        F: Fn(&str, &GenerationParams, usize) -> Result<String, GatewayError> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            script: Box::new(script),
            latency: Duration::ZERO,
            calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
            starts: Mutex::new(Vec::new()),
        }
    }

    pub fn constant(answer: impl Into<String>) -> Self {
        let answer = answer.into();
        Self::from_fn("mock", move |_, _, _| Ok(answer.clone()))
    }

    /// Looks up the target question of an evaluation prompt in `answers`.
    /// Unknown questions get a reply no parser will accept.
    pub fn answer_key(answers: HashMap<String, String>) -> Self {
        Self::from_fn("mock", move |prompt, _, _| {
            Ok(target_question(prompt)
                .and_then(|q| answers.get(q).cloned())
                .unwrap_or_else(|| "I cannot determine the answer.".to_string()))
        })
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    pub fn call_starts(&self) -> Vec<Instant> {
        self.starts.lock().unwrap().clone()
    }
}

impl TextProvider for MockProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String, GatewayError> {
        let index = self.calls.fetch_add(1, Ordering::SeqCst);
        self.starts.lock().unwrap().push(Instant::now());
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        if !self.latency.is_zero() {
            thread::sleep(self.latency);
        }
        let result = (self.script)(prompt, params, index);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        result
    }
}

/// Serves nothing; every request that misses the cache fails.
pub struct ReplayProvider;

impl TextProvider for ReplayProvider {
    fn name(&self) -> &str {
        "replay"
    }

    fn is_network(&self) -> bool {
        false
    }

    fn complete(&self, _prompt: &str, _params: &GenerationParams) -> Result<String, GatewayError> {
        Err(GatewayError::ReplayMiss)
    }
}

/// Text of the last `Question: ` line of a prompt, i.e. the puzzle being asked.
pub fn target_question(prompt: &str) -> Option<&str> {
    let start = prompt.rfind("Question: ")? + "Question: ".len();
    let rest = &prompt[start..];
    Some(rest.split('\n').next().unwrap_or(rest))
}
