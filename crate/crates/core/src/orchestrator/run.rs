//! Executing one run spec: exemplar selection, rendering, generation,
//! checkpointing and scoring.
//!
//! Run directory layout:
//!
//! ```text
//! runs/<run_id>/
//!   spec.json          the RunSpec
//!   checkpoint.jsonl   append-only, one line per finished instance
//!   predictions.jsonl  parsed predictions in dataset order
//!   metrics.json       MetricsReport
//!   metrics.csv        header + one table row
//!   manifest.json      config snapshot, exemplars, cache statistics, timestamps
//! ```
//!
//! Everything except `manifest.json` and `checkpoint.jsonl` is a pure function
//! of the spec, the inputs and the completion texts.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use serde::{Deserialize, Serialize};

use super::plan::RunSpec;
use super::OrchestratorError;
use crate::adjudicator::{self, extract_choice, score_run, MetricsReport, ParseStatus, Prediction};
use crate::dataset::{derive_groups, DatasetSplit, PuzzleInstance, SplitRole};
use crate::gateway::{Completion, Gateway, GatewayError, GatewayStats};
use crate::prompt::{render_prompt, ExampleSource, RenderedPrompt, StrategyKind, DIRECT_TEMPLATE_VERSION};
use crate::reasoning::{get_reasoning, ReasoningStore};
use crate::retrieval::{top_n_similar, EmbeddingStore};

const REASK_SALT: &str = "reask-1";

/// Data a run reads. Stores are required only by the strategies that use them.
#[derive(Clone, Copy)]
pub struct RunInputs<'a> {
    pub train: &'a DatasetSplit,
    pub test: &'a DatasetSplit,
    pub train_embeddings: Option<&'a EmbeddingStore>,
    pub test_embeddings: Option<&'a EmbeddingStore>,
    pub reasoning: Option<&'a ReasoningStore>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExecuteOptions {
    /// Stop with [`OrchestratorError::Interrupted`] after this many new instances.
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub instance_id: String,
    pub prompt_hash: String,
    pub raw_text: String,
    pub attempts: u32,
    pub from_cache: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_raw_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub spec: RunSpec,
    pub label: String,
    pub template_version: String,
    /// Set for templates reconstructed rather than transcribed (direct-v1).
    pub reconstructed_template: bool,
    pub provider_name: String,
    pub provider_model: String,
    pub embedding_provider_tag: Option<String>,
    pub exemplar_ids: BTreeMap<String, Vec<String>>,
    pub provider_errors: Vec<String>,
    pub resumed_instances: usize,
    pub cache: GatewayStats,
    pub started_at: String,
    pub finished_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_id: String,
    pub predictions: Vec<Prediction>,
    pub metrics: MetricsReport,
    pub manifest: RunManifest,
}

impl RunResult {
    pub fn spec(&self) -> &RunSpec {
        &self.manifest.spec
    }

    /// Reads back a finished run directory.
    pub fn load(run_dir: &Path) -> Result<Self, OrchestratorError> {
        let manifest: RunManifest = read_json(&run_dir.join("manifest.json"))?;
        let metrics: MetricsReport = read_json(&run_dir.join("metrics.json"))?;
        let predictions = adjudicator::load_predictions(&run_dir.join("predictions.jsonl"))?;
        Ok(Self {
            run_id: manifest.run_id.clone(),
            predictions,
            metrics,
            manifest,
        })
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, OrchestratorError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| OrchestratorError::Corrupt(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), OrchestratorError> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::from)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn run_dir(out_dir: &Path, run_id: &str) -> PathBuf {
    out_dir.join("runs").join(run_id)
}

/// Exemplar ids for every test instance, in prompt order.
pub fn select_exemplars(spec: &RunSpec, inputs: &RunInputs<'_>) -> Result<Vec<Vec<String>>, OrchestratorError> {
    let test = &inputs.test.instances;
    if spec.strategy.kind != StrategyKind::FewShot {
        return Ok(vec![Vec::new(); test.len()]);
    }
    let selected: Vec<Vec<String>> = match spec.strategy.example_source {
        ExampleSource::Static => {
            let ids = spec
                .static_exemplar_ids
                .clone()
                .ok_or_else(|| OrchestratorError::InvalidConfig("static run without exemplar ids".into()))?;
            vec![ids; test.len()]
        }
        ExampleSource::Dynamic => {
            let cfg = spec
                .retrieval
                .ok_or_else(|| OrchestratorError::InvalidConfig("dynamic run without retrieval config".into()))?;
            let train_store = inputs
                .train_embeddings
                .ok_or_else(|| OrchestratorError::MissingStore(format!("{} train embeddings", spec.subtask)))?;
            let test_store = inputs
                .test_embeddings
                .ok_or_else(|| OrchestratorError::MissingStore(format!("{} test embeddings", spec.subtask)))?;
            if train_store.provider_tag() != test_store.provider_tag() {
                return Err(OrchestratorError::MissingStore(format!(
                    "train embeddings are from '{}' but test embeddings from '{}'",
                    train_store.provider_tag(),
                    test_store.provider_tag()
                )));
            }
            test.iter()
                .map(|inst| {
                    let query = test_store.vector(&inst.id)?;
                    let ids = top_n_similar(&inst.id, query, train_store, &cfg)?;
                    Ok(cfg.arrange(ids))
                })
                .collect::<Result<_, OrchestratorError>>()?
        }
    };
    for ids in &selected {
        if ids.len() != spec.strategy.shots {
            return Err(OrchestratorError::InvalidConfig(format!(
                "only {} exemplars available for a {}-shot run",
                ids.len(),
                spec.strategy.shots
            )));
        }
        for id in ids {
            if inputs.train.get(id).is_none() {
                return Err(OrchestratorError::UnknownExemplarId {
                    subtask: spec.subtask,
                    id: id.clone(),
                });
            }
        }
    }
    Ok(selected)
}

/// Renders every evaluation prompt, failing before any provider call if a
/// required reasoning record is missing.
pub fn render_all(
    spec: &RunSpec,
    inputs: &RunInputs<'_>,
    exemplars: &[Vec<String>],
) -> Result<Vec<RenderedPrompt>, OrchestratorError> {
    let train = inputs.train.index();
    let reasoning = match &spec.generator_tag {
        Some(tag) => {
            let store = inputs
                .reasoning
                .ok_or_else(|| OrchestratorError::MissingStore(format!("reasoning store for '{tag}'")))?;
            let mut missing: Vec<&str> = exemplars
                .iter()
                .flatten()
                .filter(|id| get_reasoning(store, id, tag).is_err())
                .map(String::as_str)
                .collect();
            missing.sort_unstable();
            missing.dedup();
            if !missing.is_empty() {
                return Err(OrchestratorError::MissingReasoning {
                    generator_tag: tag.clone(),
                    instance_ids: missing.into_iter().map(String::from).collect(),
                });
            }
            Some((store, tag.as_str()))
        }
        None => None,
    };
    inputs
        .test
        .instances
        .iter()
        .zip(exemplars)
        .map(|(inst, ids)| {
            let pairs: Vec<(&PuzzleInstance, Option<&str>)> = ids
                .iter()
                .map(|id| {
                    let ex = train[id.as_str()];
                    let text = reasoning.map(|(store, tag)| get_reasoning(store, id, tag).expect("checked above"));
                    (ex, text)
                })
                .collect();
            Ok(render_prompt(inst, &spec.strategy, &pairs)?)
        })
        .collect()
}

fn read_checkpoint(path: &Path) -> Result<HashMap<String, CheckpointEntry>, OrchestratorError> {
    let mut entries = HashMap::new();
    if !path.exists() {
        return Ok(entries);
    }
    let mut good_len = 0u64;
    let mut total_len = 0u64;
    let reader = BufReader::new(File::open(path)?);
    for chunk in reader.split(b'\n') {
        let chunk = chunk?;
        total_len += chunk.len() as u64 + 1;
        match serde_json::from_slice::<CheckpointEntry>(&chunk) {
            Ok(entry) => {
                good_len = total_len;
                entries.insert(entry.instance_id.clone(), entry);
            }
            // a torn final line from an interrupted append
            Err(_) => break,
        }
    }
    let actual = fs::metadata(path)?.len();
    if good_len < actual {
        log::warn!("dropping {} trailing bytes of {}", actual - good_len, path.display());
        OpenOptions::new().write(true).open(path)?.set_len(good_len)?;
    }
    Ok(entries)
}

fn generate_entry(spec: &RunSpec, prompt: &RenderedPrompt, gateway: &Gateway, choices: &[String]) -> CheckpointEntry {
    let failed = |e: GatewayError| CheckpointEntry {
        instance_id: prompt.target_id.clone(),
        prompt_hash: String::new(),
        raw_text: String::new(),
        attempts: 0,
        from_cache: false,
        first_raw_text: None,
        error: Some(e.to_string()),
    };
    let first: Completion = match gateway.generate(prompt, &spec.params) {
        Ok(c) => c,
        Err(e) => return failed(e),
    };
    let mut entry = CheckpointEntry {
        instance_id: prompt.target_id.clone(),
        prompt_hash: first.prompt_hash.clone(),
        raw_text: first.text.clone(),
        attempts: first.attempts,
        from_cache: first.from_cache,
        first_raw_text: None,
        error: None,
    };
    if spec.reask_unparsed && !extract_choice(&prompt.target_id, &first.text, choices).is_parsed() {
        match gateway.generate_salted(&prompt.text, &spec.params, REASK_SALT) {
            Ok(second) => {
                entry.first_raw_text = Some(first.text);
                entry.raw_text = second.text;
                entry.attempts += second.attempts;
                entry.from_cache &= second.from_cache;
            }
            Err(e) => log::warn!("re-ask for {} failed: {e}", prompt.target_id),
        }
    }
    entry
}

/// Runs `spec`, resuming from any checkpoint already in `run_dir`.
pub fn execute_run(
    spec: &RunSpec,
    inputs: &RunInputs<'_>,
    gateway: &Gateway,
    run_dir: &Path,
    options: &ExecuteOptions,
) -> Result<RunResult, OrchestratorError> {
    spec.validate()?;
    if inputs.train.role != SplitRole::Train || inputs.test.role != SplitRole::Test {
        return Err(OrchestratorError::InvalidConfig("inputs must be a train and a test split".into()));
    }
    if inputs.train.subtask != spec.subtask || inputs.test.subtask != spec.subtask {
        return Err(OrchestratorError::InvalidConfig(format!(
            "run binds subtask {} but inputs are {} / {}",
            spec.subtask, inputs.train.subtask, inputs.test.subtask
        )));
    }
    let started_at = chrono::Utc::now().to_rfc3339();
    let stats_before = gateway.stats();

    let exemplars = select_exemplars(spec, inputs)?;
    let prompts = render_all(spec, inputs, &exemplars)?;

    fs::create_dir_all(run_dir)?;
    write_json(&run_dir.join("spec.json"), spec)?;
    let checkpoint_path = run_dir.join("checkpoint.jsonl");
    let mut done = read_checkpoint(&checkpoint_path)?;
    done.retain(|_, e| e.error.is_none());
    let resumed = done.len();

    let mut pending: Vec<usize> = (0..prompts.len())
        .filter(|&i| !done.contains_key(&inputs.test.instances[i].id))
        .collect();
    let interrupted = match options.limit {
        Some(limit) if pending.len() > limit => {
            pending.truncate(limit);
            true
        }
        _ => false,
    };

    let mut log_file = OpenOptions::new().create(true).append(true).open(&checkpoint_path)?;
    let next = AtomicUsize::new(0);
    let workers = gateway.max_in_flight().min(pending.len()).max(1);
    let (tx, rx) = mpsc::channel::<CheckpointEntry>();
    let mut write_error = None;
    thread::scope(|s| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, pending, prompts) = (&next, &pending, &prompts);
            s.spawn(move || loop {
                let slot = next.fetch_add(1, Ordering::SeqCst);
                let Some(&i) = pending.get(slot) else { break };
                let entry = generate_entry(spec, &prompts[i], gateway, &inputs.test.instances[i].choices);
                if tx.send(entry).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for entry in rx {
            let mut line = serde_json::to_vec(&entry).expect("checkpoint entry serializes");
            line.push(b'\n');
            if let Err(e) = log_file.write_all(&line).and_then(|_| log_file.flush()) {
                write_error.get_or_insert(e);
            }
            done.insert(entry.instance_id.clone(), entry);
        }
    });
    if let Some(e) = write_error {
        return Err(e.into());
    }
    if interrupted {
        return Err(OrchestratorError::Interrupted {
            completed: done.len(),
            total: prompts.len(),
        });
    }

    let mut provider_errors = Vec::new();
    let predictions: Vec<Prediction> = inputs
        .test
        .instances
        .iter()
        .map(|inst| {
            let entry = &done[&inst.id];
            if entry.error.is_some() {
                provider_errors.push(inst.id.clone());
                Prediction {
                    instance_id: inst.id.clone(),
                    predicted: None,
                    raw_text: String::new(),
                    parse_status: ParseStatus::Unparseable,
                }
            } else {
                extract_choice(&inst.id, &entry.raw_text, &inst.choices)
            }
        })
        .collect();
    let groups = derive_groups(inputs.test)?;
    let metrics = score_run(&predictions, inputs.test, &groups)?;

    let stats_after = gateway.stats();
    let manifest = RunManifest {
        run_id: spec.run_id.clone(),
        spec: spec.clone(),
        label: spec.strategy.label(),
        template_version: spec.strategy.template_version().to_string(),
        reconstructed_template: spec.strategy.template_version() == DIRECT_TEMPLATE_VERSION,
        provider_name: gateway.provider_name().to_string(),
        provider_model: spec.params.provider_model.clone(),
        embedding_provider_tag: match spec.strategy.example_source {
            ExampleSource::Dynamic if spec.strategy.kind == StrategyKind::FewShot => {
                inputs.train_embeddings.map(|s| s.provider_tag().to_string())
            }
            _ => None,
        },
        exemplar_ids: inputs
            .test
            .instances
            .iter()
            .zip(&exemplars)
            .filter(|(_, ids)| !ids.is_empty())
            .map(|(inst, ids)| (inst.id.clone(), ids.clone()))
            .collect(),
        provider_errors,
        resumed_instances: resumed,
        cache: GatewayStats {
            cache_hits: stats_after.cache_hits - stats_before.cache_hits,
            cache_misses: stats_after.cache_misses - stats_before.cache_misses,
            provider_calls: stats_after.provider_calls - stats_before.provider_calls,
        },
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
    };

    adjudicator::save_predictions(&predictions, &run_dir.join("predictions.jsonl"))?;
    write_json(&run_dir.join("metrics.json"), &metrics)?;
    fs::write(run_dir.join("metrics.csv"), adjudicator::metrics_csv(&manifest.label, &metrics))?;
    write_json(&run_dir.join("manifest.json"), &manifest)?;

    Ok(RunResult {
        run_id: spec.run_id.clone(),
        predictions,
        metrics,
        manifest,
    })
}
