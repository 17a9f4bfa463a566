mod common;

use std::sync::Arc;

use lateral_core::dataset::{SplitRole, Subtask};
use lateral_core::gateway::{
    Backoff, CompletionCache, Gateway, GatewayError, GenerationParams, MockProvider, RateLimiter, RetryPolicy,
};
use lateral_core::reasoning::{
    build_reasoning_store, get_reasoning, import_reasoning, NotFoundReason, ReasoningError, ReasoningRecord,
    ReasoningStatus, ReasoningStore, DEFAULT_MAX_REASONING_CHARS,
};

fn gateway(mock: Arc<MockProvider>, cache: Option<CompletionCache>) -> Gateway {
    Gateway::new(
        mock,
        cache,
        RateLimiter::per_minute(100_000),
        3,
        RetryPolicy {
            max_retries: 1,
            backoff: Backoff::none(),
        },
    )
}

#[test]
fn mock_fills_every_train_instance() {
    let split = common::split(Subtask::Sentence, SplitRole::Train);
    let mock = Arc::new(MockProvider::constant("Because the train is electric."));
    let mut store = ReasoningStore::new();
    let summary = build_reasoning_store(
        &mut store,
        &split,
        &gateway(mock.clone(), None),
        &GenerationParams::default(),
        "gen",
        DEFAULT_MAX_REASONING_CHARS,
    )
    .unwrap();
    assert_eq!((summary.generated, summary.failed, summary.skipped), (5, 0, 0));
    assert_eq!(store.ok_count("gen"), 5);
    assert_eq!(get_reasoning(&store, "s_train_1", "gen").unwrap(), "Because the train is electric.");
}

#[test]
fn rerun_only_fills_the_gaps() {
    let split = common::split(Subtask::Word, SplitRole::Train);
    let mut store = ReasoningStore::new();
    for id in ["w_train_1", "w_train_2", "w_train_3"] {
        store.insert(ReasoningRecord::ok(id, "gen", "earlier".into()));
    }
    let mock = Arc::new(MockProvider::constant("fresh"));
    let summary = build_reasoning_store(
        &mut store,
        &split,
        &gateway(mock.clone(), None),
        &GenerationParams::default(),
        "gen",
        DEFAULT_MAX_REASONING_CHARS,
    )
    .unwrap();
    assert_eq!(mock.calls(), 2);
    assert_eq!(summary.skipped, 3);
    assert_eq!(get_reasoning(&store, "w_train_1", "gen").unwrap(), "earlier");
    assert_eq!(get_reasoning(&store, "w_train_5", "gen").unwrap(), "fresh");
}

#[test]
fn one_permanent_failure_is_isolated() {
    let split = common::split(Subtask::Sentence, SplitRole::Train);
    let mock = Arc::new(MockProvider::from_fn("m", |prompt, _, _| {
        if prompt.contains("shaves several times") {
            Err(GatewayError::ProviderError {
                status: 400,
                message: "blocked".into(),
            })
        } else {
            Ok("fine".into())
        }
    }));
    let mut store = ReasoningStore::new();
    let summary = build_reasoning_store(
        &mut store,
        &split,
        &gateway(mock, None),
        &GenerationParams::default(),
        "gen",
        DEFAULT_MAX_REASONING_CHARS,
    )
    .unwrap();
    assert_eq!((summary.generated, summary.failed), (4, 1));
    let failed = store.record("s_train_3", "gen").unwrap();
    assert_eq!(failed.status, ReasoningStatus::Failed);
    match get_reasoning(&store, "s_train_3", "gen").unwrap_err() {
        ReasoningError::NotFound { reason, .. } => {
            assert_eq!(reason, NotFoundReason::GenerationFailed);
            assert_eq!(reason.to_string(), "generation failed");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn missing_credential_aborts_the_pass() {
    let split = common::split(Subtask::Sentence, SplitRole::Train);
    let mock = Arc::new(MockProvider::from_fn("m", |_, _, _| Err(GatewayError::AuthMissing("KEY".into()))));
    let mut store = ReasoningStore::new();
    let err = build_reasoning_store(
        &mut store,
        &split,
        &gateway(mock, None),
        &GenerationParams::default(),
        "gen",
        DEFAULT_MAX_REASONING_CHARS,
    )
    .unwrap_err();
    assert!(matches!(err, ReasoningError::AuthMissing(v) if v == "KEY"));
}

#[test]
fn overlong_generation_is_rejected() {
    let split = common::split(Subtask::Word, SplitRole::Train);
    let mock = Arc::new(MockProvider::constant("x".repeat(50)));
    let mut store = ReasoningStore::new();
    let summary = build_reasoning_store(
        &mut store,
        &split,
        &gateway(mock, None),
        &GenerationParams::default(),
        "gen",
        20,
    )
    .unwrap();
    assert_eq!(summary.failed, 5);
    assert_eq!(store.ok_count("gen"), 0);
}

#[test]
fn lookups_distinguish_absence() {
    let mut store = ReasoningStore::new();
    store.insert(ReasoningRecord::ok("a", "gen", "text".into()));
    assert_eq!(get_reasoning(&store, "a", "gen").unwrap(), "text");
    match get_reasoning(&store, "a", "other").unwrap_err() {
        ReasoningError::NotFound { reason, .. } => assert_eq!(reason, NotFoundReason::NeverGenerated),
        other => panic!("unexpected {other:?}"),
    }
    // a later failure never replaces good text
    store.insert(ReasoningRecord::failed("a", "gen", "boom".into()));
    assert_eq!(get_reasoning(&store, "a", "gen").unwrap(), "text");
}

#[test]
fn store_round_trips_losslessly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    let mut store = ReasoningStore::new();
    store.insert(ReasoningRecord::ok("a", "g1", "multi\nline \"quoted\" text".into()));
    store.insert(ReasoningRecord::failed("b", "g1", "timeout".into()));
    store.insert(ReasoningRecord::ok("a", "g2", "other".into()));
    store.save(&path).unwrap();
    assert_eq!(ReasoningStore::load(&path).unwrap(), store);
}

#[test]
fn bulk_import_uses_its_own_tag() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ext.jsonl");
    std::fs::write(
        &path,
        "{\"instance_id\":\"w_train_2\",\"reasoning\":\"Clamp contains lamp.\"}\n{\"instance_id\":\"w_train_1\",\"reasoning_text\":\"Electricity ends in city.\"}\n",
    )
    .unwrap();
    let mut store = ReasoningStore::new();
    let summary = import_reasoning(&mut store, &path, "ext", DEFAULT_MAX_REASONING_CHARS).unwrap();
    assert_eq!(summary.generated, 2);
    assert_eq!(get_reasoning(&store, "w_train_2", "ext").unwrap(), "Clamp contains lamp.");
    assert!(get_reasoning(&store, "w_train_2", "gen").is_err());
}

#[test]
fn generation_goes_through_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let split = common::split(Subtask::Word, SplitRole::Train);
    let mock = Arc::new(MockProvider::constant("why"));
    let gw = gateway(mock.clone(), Some(CompletionCache::open(dir.path()).unwrap()));
    let params = GenerationParams::default();
    build_reasoning_store(&mut ReasoningStore::new(), &split, &gw, &params, "gen", 4000).unwrap();
    build_reasoning_store(&mut ReasoningStore::new(), &split, &gw, &params, "gen", 4000).unwrap();
    assert_eq!(mock.calls(), 5);
}
