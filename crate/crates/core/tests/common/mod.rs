#![allow(dead_code)]

pub mod oracle;

use std::path::{Path, PathBuf};

use lateral_core::dataset::{load_split, DatasetSplit, SplitRole, Subtask};

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

pub fn fixture(name: &str) -> PathBuf {
    fixture_dir().join(name)
}

pub fn golden(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn split(subtask: Subtask, role: SplitRole) -> DatasetSplit {
    load_split(&fixture(&format!("{subtask}_{role}.jsonl")), subtask, role).expect("fixture loads")
}

/// Experiment config over the fixture data with the given providers and matrix blocks.
pub fn config_text(extra: &str) -> String {
    format!(
        r#"
[data]
dir = "{data}"

[retrieval]
embedder = "fixture"

[reasoning]
self_generated = "mock-self"
external_generated = "mock-ext"

[embedders.fixture]
kind = "precomputed"
path = "{vectors}"

{extra}
"#,
        data = fixture_dir().display(),
        vectors = fixture("vectors.jsonl").display(),
    )
}

/// Gold-answer and always-first mocks with distinct models, unthrottled.
pub const MOCK_PROVIDERS: &str = r#"
[providers.gold]
kind = "mock"
mode = "gold"
model = "mock-gold"
rpm = 1000000

[providers.first]
kind = "mock"
mode = "constant"
answer = "Option 1"
model = "mock-first"
rpm = 1000000
"#;

pub fn config(extra: &str) -> lateral_core::orchestrator::ExperimentConfig {
    let text = config_text(&format!("{MOCK_PROVIDERS}\n{extra}"));
    lateral_core::orchestrator::ExperimentConfig::parse(&text, &fixture_dir()).expect("config parses")
}

/// Unthrottled gateway without retries around `provider`, caching under `cache_dir`.
pub fn gateway(
    provider: std::sync::Arc<dyn lateral_core::gateway::TextProvider>,
    cache_dir: &Path,
) -> lateral_core::gateway::Gateway {
    use lateral_core::gateway::{Backoff, CompletionCache, Gateway, RateLimiter, RetryPolicy};
    Gateway::new(
        provider,
        Some(CompletionCache::open(cache_dir).unwrap()),
        RateLimiter::per_minute(1_000_000),
        4,
        RetryPolicy {
            max_retries: 0,
            backoff: Backoff::none(),
        },
    )
}
