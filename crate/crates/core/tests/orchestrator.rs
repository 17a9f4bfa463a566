mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use lateral_core::dataset::{SplitRole, Subtask};
use lateral_core::gateway::{GatewayError, GenerationParams, MockProvider};
use lateral_core::orchestrator::driver::{
    configured_subtasks, generate_reasoning, gold_answer_key, load_datasets, load_results, plan_with_overrides,
    run_all, Datasets, GatewayOverrides, LoadedInputs, REPLAY_PROVIDER,
};
use lateral_core::orchestrator::report::{plot_csv, results_csv};
use lateral_core::orchestrator::{
    emit_report, execute_run, ExecuteOptions, ExperimentConfig, OrchestratorError, RunResult, RunSpec, Workspace,
};
use lateral_core::prompt::{ExampleSource, ReasoningSource, Strategy};
use lateral_core::retrieval::{top_n_similar, RetrievalConfig};

const ZERO_SENTENCE: &str = r#"
[[matrix]]
provider = "gold"
subtasks = ["sentence"]
kinds = ["zero_direct", "zero_definition"]
"#;

fn setup(extra: &str) -> (ExperimentConfig, Datasets) {
    let config = common::config(extra);
    let data = load_datasets(&config, &configured_subtasks(&config)).unwrap();
    (config, data)
}

fn specs(config: &ExperimentConfig, data: &Datasets) -> Vec<RunSpec> {
    plan_with_overrides(config, data, &GatewayOverrides::default()).unwrap()
}

fn run_one(
    config: &ExperimentConfig,
    ws: &Workspace,
    data: &Datasets,
    spec: &RunSpec,
    mock: Arc<MockProvider>,
    options: &ExecuteOptions,
) -> Result<RunResult, OrchestratorError> {
    let loaded = LoadedInputs::load(config, ws, data, spec)?;
    let inputs = loaded.inputs(data, spec.subtask)?;
    let gateway = common::gateway(mock, &ws.cache_dir);
    execute_run(spec, &inputs, &gateway, &ws.run_dir(&spec.run_id), options)
}

fn gold(data: &Datasets) -> Arc<MockProvider> {
    Arc::new(MockProvider::answer_key(gold_answer_key(data)))
}

#[test]
fn config_errors_are_reported() {
    let bad = [
        "[[matrix]]\nprovider = \"nobody\"\nsubtasks = [\"word\"]\nkinds = [\"zero_direct\"]",
        "[[matrix]]\nprovider = \"gold\"\nsubtasks = [\"word\"]\nkinds = [\"few_shot\"]",
        "[params]\ntemperature = -1.0",
        "[mystery]\nx = 1",
    ];
    for extra in bad {
        let text = common::config_text(&format!("{}\n{extra}", common::MOCK_PROVIDERS));
        assert!(
            matches!(ExperimentConfig::parse(&text, Path::new(".")), Err(OrchestratorError::InvalidConfig(_))),
            "{extra}"
        );
    }
}

#[test]
fn plan_expands_and_dedupes() {
    let (config, data) = setup(ZERO_SENTENCE);
    assert_eq!(specs(&config, &data).len(), 2);

    let block = r#"
[[matrix]]
provider = "gold"
subtasks = ["word"]
kinds = ["few_shot"]
shots = [1, 3, 5]
example_sources = ["dynamic"]
reasoning_sources = ["none", "self_generated"]
"#;
    let (config, data) = setup(block);
    let planned = specs(&config, &data);
    assert_eq!(planned.len(), 6);
    assert_eq!(planned.iter().map(|s| &s.run_id).collect::<BTreeSet<_>>().len(), 6);
    let (config, data) = setup(&format!("{block}{block}"));
    assert_eq!(specs(&config, &data), planned);
}

#[test]
fn unknown_static_exemplar_is_rejected() {
    let (config, data) = setup(
        r#"
[static_exemplars]
sentence = ["s_train_1", "s_missing"]

[[matrix]]
provider = "gold"
subtasks = ["sentence"]
kinds = ["few_shot"]
shots = [2]
"#,
    );
    match plan_with_overrides(&config, &data, &GatewayOverrides::default()) {
        Err(OrchestratorError::UnknownExemplarId { subtask, id }) => {
            assert_eq!((subtask, id.as_str()), (Subtask::Sentence, "s_missing"));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn gold_and_first_option_mocks_score_as_expected() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::new(dir.path());
    let (config, _) = setup(&format!("{ZERO_SENTENCE}\n[[matrix]]\nprovider = \"first\"\nsubtasks = [\"sentence\"]\nkinds = [\"zero_definition\"]\n"));
    let results = run_all(&config, &ws, &GatewayOverrides::default(), &ExecuteOptions::default()).unwrap();
    assert_eq!(results.len(), 3);
    for r in &results {
        let expected = if r.spec().provider == "gold" { "1.000" } else { "0.333" };
        assert_eq!(r.metrics.rendered()[5], expected, "{}", r.spec().provider);
    }
    // two providers in one subtask: rows carry the provider name
    let csv = fs::read_to_string(ws.reports_dir().join("sentence_results.csv")).unwrap();
    assert!(csv.contains("[first] Definition Prompt,"), "{csv}");
    assert_eq!(load_results(&ws).unwrap().len(), 3);
}

#[test]
fn interrupted_run_resumes_with_only_the_remaining_calls() {
    let (config, data) = setup(ZERO_SENTENCE);
    let spec = &specs(&config, &data)[1];
    let fresh = tempfile::tempdir().unwrap();
    let full = run_one(&config, &Workspace::new(fresh.path()), &data, spec, gold(&data), &ExecuteOptions::default()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::new(dir.path());
    let first = gold(&data);
    let err = run_one(&config, &ws, &data, spec, first.clone(), &ExecuteOptions { limit: Some(3) }).unwrap_err();
    assert!(matches!(err, OrchestratorError::Interrupted { completed: 3, total: 6 }));
    assert_eq!(first.calls(), 3);

    // a torn append from the interruption is dropped
    let checkpoint = ws.run_dir(&spec.run_id).join("checkpoint.jsonl");
    let mut bytes = fs::read(&checkpoint).unwrap();
    bytes.extend_from_slice(b"{\"instance_id\":\"s_g");
    fs::write(&checkpoint, bytes).unwrap();

    // wipe the cache so every remaining instance is a real call
    fs::remove_dir_all(&ws.cache_dir).unwrap();
    let second = gold(&data);
    let resumed = run_one(&config, &ws, &data, spec, second.clone(), &ExecuteOptions::default()).unwrap();
    assert_eq!(second.calls(), 3);
    assert_eq!(resumed.metrics, full.metrics);
    assert_eq!(resumed.predictions, full.predictions);
    assert_eq!(resumed.manifest.resumed_instances, 3);
    assert_eq!(fs::read_to_string(&checkpoint).unwrap().lines().count(), 6);
}

#[test]
fn provider_errors_are_recorded_and_retried_on_resume() {
    let (config, data) = setup(ZERO_SENTENCE);
    let spec = &specs(&config, &data)[1];
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::new(dir.path());
    let key = gold_answer_key(&data);
    let flaky = Arc::new(MockProvider::from_fn("flaky", move |prompt, _, _| {
        if prompt.contains("bed but no head") {
            Err(GatewayError::ProviderError {
                status: 400,
                message: "refused".into(),
            })
        } else {
            let q = lateral_core::gateway::mock::target_question(prompt).unwrap();
            Ok(key[q].clone())
        }
    }));
    let partial = run_one(&config, &ws, &data, spec, flaky, &ExecuteOptions::default()).unwrap();
    assert_eq!(partial.manifest.provider_errors, ["s_g1_ori"]);
    assert_eq!(partial.metrics.unparsed_count, 1);

    let healthy = gold(&data);
    let fixed = run_one(&config, &ws, &data, spec, healthy.clone(), &ExecuteOptions::default()).unwrap();
    assert_eq!(healthy.calls(), 1);
    assert!(fixed.manifest.provider_errors.is_empty());
    assert_eq!(fixed.metrics.rendered()[5], "1.000");
}

#[test]
fn missing_reasoning_fails_before_any_call() {
    let (config, data) = setup(
        r#"
[[matrix]]
provider = "gold"
subtasks = ["word"]
kinds = ["few_shot"]
shots = [2]
reasoning_sources = ["self_generated"]
"#,
    );
    let spec = &specs(&config, &data)[0];
    let dir = tempfile::tempdir().unwrap();
    let mock = gold(&data);
    match run_one(&config, &Workspace::new(dir.path()), &data, spec, mock.clone(), &ExecuteOptions::default()) {
        Err(OrchestratorError::MissingReasoning {
            generator_tag,
            instance_ids,
        }) => {
            assert_eq!(generator_tag, "mock-self");
            assert_eq!(instance_ids, ["w_train_1", "w_train_2"]);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(mock.calls(), 0);
}

#[test]
fn dynamic_exemplars_are_reproducible_from_the_stores() {
    let (config, data) = setup(
        r#"
[[matrix]]
provider = "gold"
subtasks = ["word"]
kinds = ["few_shot"]
shots = [3]
example_sources = ["dynamic"]
"#,
    );
    let spec = &specs(&config, &data)[0];
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::new(dir.path());
    let result = run_one(&config, &ws, &data, spec, gold(&data), &ExecuteOptions::default()).unwrap();
    assert_eq!(result.manifest.embedding_provider_tag.as_deref(), Some("fixture-bow16"));

    let loaded = LoadedInputs::load(&config, &ws, &data, spec).unwrap();
    let (train, test) = (loaded.train_embeddings.unwrap(), loaded.test_embeddings.unwrap());
    let test_split = data.split(Subtask::Word, SplitRole::Test).unwrap();
    assert_eq!(result.manifest.exemplar_ids.len(), test_split.len());
    for inst in &test_split.instances {
        let ids = top_n_similar(&inst.id, test.vector(&inst.id).unwrap(), &train, &RetrievalConfig::new(3)).unwrap();
        assert_eq!(result.manifest.exemplar_ids[&inst.id], ids);
    }
}

#[test]
fn run_id_tracks_every_field() {
    let base = || {
        RunSpec::new(
            Subtask::Word,
            Strategy::few_shot(2, ExampleSource::Static, ReasoningSource::None),
            Some(vec!["w_train_1".into(), "w_train_2".into()]),
            None,
            None,
            GenerationParams::default(),
            "gold",
            false,
        )
        .unwrap()
    };
    let spec = base();
    assert_eq!(spec.run_id, base().run_id);
    assert_eq!(spec.run_id.len(), 16);

    let mut variants = vec![spec.clone()];
    let mut v = spec.clone();
    v.subtask = Subtask::Sentence;
    variants.push(v);
    let mut v = spec.clone();
    v.static_exemplar_ids = Some(vec!["w_train_2".into(), "w_train_1".into()]);
    variants.push(v);
    let mut v = spec.clone();
    v.params.temperature = 0.0;
    variants.push(v);
    let mut v = spec.clone();
    v.params.provider_model = "other".into();
    variants.push(v);
    let mut v = spec.clone();
    v.reask_unparsed = true;
    variants.push(v);
    variants.push(spec.with_provider("first", None));
    let mut v = spec.clone();
    v.strategy = Strategy::few_shot(2, ExampleSource::Static, ReasoningSource::SelfGenerated);
    v.generator_tag = Some("g".into());
    variants.push(v);
    let ids: BTreeSet<String> = variants.iter().map(|s| s.compute_run_id()).collect();
    assert_eq!(ids.len(), variants.len());
}

#[test]
fn report_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::new(dir.path());
    let (config, data) = setup(
        r#"
[[matrix]]
provider = "gold"
subtasks = ["word"]
kinds = ["few_shot"]
shots = [1, 2, 3]
example_sources = ["static", "dynamic"]
reasoning_sources = ["none", "self_generated"]
"#,
    );
    let gw = common::gateway(gold(&data), &ws.cache_dir);
    let summary = generate_reasoning(&config, &ws, &data, Subtask::Word, "mock-self", "gold", &gw).unwrap();
    assert_eq!(summary.generated, 5);

    let results = run_all(&config, &ws, &GatewayOverrides::default(), &ExecuteOptions::default()).unwrap();
    assert_eq!(results.len(), 12);
    assert!(results.iter().all(|r| r.metrics.rendered()[5] == "1.000"));
    let rows: Vec<&RunResult> = results.iter().collect();
    let plot = plot_csv(&rows);
    assert_eq!(plot.lines().count(), 1 + 72);
    assert_eq!(plot.lines().next().unwrap(), "provider,family,shots,column,value");

    let single = results_csv(&rows[..1]);
    let lines: Vec<&str> = single.lines().collect();
    assert_eq!(lines[0], "Strategy,Ori,Sem,Con,Ori & Sem,Ori & Sem & Con,Overall");
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1].split(',').count(), 7);

    let written = emit_report(&results, &ws.reports_dir()).unwrap();
    assert_eq!(written.len(), 3);
    assert!(matches!(emit_report(&[], &ws.reports_dir()), Err(OrchestratorError::EmptyResults)));
}

#[test]
fn warm_cache_reruns_make_no_calls() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::new(dir.path());
    let (config, _) = setup(ZERO_SENTENCE);
    let first = run_all(&config, &ws, &GatewayOverrides::default(), &ExecuteOptions::default()).unwrap();
    let report = fs::read(ws.reports_dir().join("sentence_results.csv")).unwrap();

    // a fresh run directory on the same cache, through the cache-only provider
    let replay = GatewayOverrides {
        provider: Some(REPLAY_PROVIDER.into()),
        ..Default::default()
    };
    let again = run_all(&config, &ws, &replay, &ExecuteOptions::default()).unwrap();
    assert_eq!(again.len(), first.len());
    for (a, b) in first.iter().zip(&again) {
        assert_ne!(a.run_id, b.run_id);
        assert_eq!(b.manifest.cache.provider_calls, 0);
        assert_eq!(b.manifest.cache.cache_hits, 6);
        assert_eq!(
            fs::read(ws.run_dir(&a.run_id).join("predictions.jsonl")).unwrap(),
            fs::read(ws.run_dir(&b.run_id).join("predictions.jsonl")).unwrap()
        );
    }
    assert_eq!(fs::read(ws.reports_dir().join("sentence_results.csv")).unwrap(), report);
}

#[test]
fn replay_on_a_cold_cache_records_errors() {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::new(dir.path());
    let (config, _) = setup(ZERO_SENTENCE);
    let replay = GatewayOverrides {
        provider: Some(REPLAY_PROVIDER.into()),
        ..Default::default()
    };
    let results = run_all(&config, &ws, &replay, &ExecuteOptions::default()).unwrap();
    assert!(results.iter().all(|r| r.manifest.provider_errors.len() == 6));
}

#[test]
fn shipped_example_config_parses() {
    let text = include_str!("../../../lateral.example.toml");
    let config = ExperimentConfig::parse(text, Path::new(".")).unwrap();
    assert_eq!(config.providers.len(), 3);
    assert_eq!(config.provider("gpt4").unwrap().model.as_deref(), Some("gpt-4"));
}
