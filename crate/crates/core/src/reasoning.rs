//! Per-training-instance rationales, keyed by the generator that produced them.
//!
//! Reasoning is built in its own pass before any evaluation run. A failed
//! generation is stored with `status = failed` so a later pass retries only
//! what is missing.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetSplit, PuzzleInstance};
use crate::gateway::{Gateway, GatewayError, GenerationParams};
use crate::prompt::render_reasoning_request;

pub const DEFAULT_MAX_REASONING_CHARS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasoningStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningRecord {
    pub instance_id: String,
    pub generator_tag: String,
    pub reasoning_text: String,
    pub status: ReasoningStatus,
    pub created_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ReasoningRecord {
    pub fn ok(instance_id: &str, generator_tag: &str, text: String) -> Self {
        Self {
            instance_id: instance_id.into(),
            generator_tag: generator_tag.into(),
            reasoning_text: text,
            status: ReasoningStatus::Ok,
            created_at: chrono::Utc::now().to_rfc3339(),
            error: None,
        }
    }

    pub fn failed(instance_id: &str, generator_tag: &str, error: String) -> Self {
        Self {
            instance_id: instance_id.into(),
            generator_tag: generator_tag.into(),
            reasoning_text: String::new(),
            status: ReasoningStatus::Failed,
            created_at: chrono::Utc::now().to_rfc3339(),
            error: Some(error),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ReasoningStatus::Ok
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NotFoundReason {
    NeverGenerated,
    GenerationFailed,
}

impl std::fmt::Display for NotFoundReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NotFoundReason::NeverGenerated => "never generated",
            NotFoundReason::GenerationFailed => "generation failed",
        })
    }
}

#[derive(Debug, Error)]
pub enum ReasoningError {
    #[error("no reasoning for '{instance_id}' from '{generator_tag}': {reason}")]
    NotFound {
        instance_id: String,
        generator_tag: String,
        reason: NotFoundReason,
    },
    #[error("credential environment variable {0} is not set")]
    AuthMissing(String),
    #[error("malformed reasoning record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Records keyed by `(instance_id, generator_tag)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReasoningStore {
    records: BTreeMap<(String, String), ReasoningRecord>,
}

impl ReasoningStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &ReasoningRecord> {
        self.records.values()
    }

    pub fn record(&self, instance_id: &str, generator_tag: &str) -> Option<&ReasoningRecord> {
        self.records.get(&(instance_id.to_string(), generator_tag.to_string()))
    }

    pub fn has_ok(&self, instance_id: &str, generator_tag: &str) -> bool {
        self.record(instance_id, generator_tag).is_some_and(ReasoningRecord::is_ok)
    }

    /// Inserts `record` unless it would replace an ok record with a failed one.
    pub fn insert(&mut self, record: ReasoningRecord) {
        let key = (record.instance_id.clone(), record.generator_tag.clone());
        if let Some(existing) = self.records.get(&key) {
            if existing.is_ok() && !record.is_ok() {
                return;
            }
        }
        self.records.insert(key, record);
    }

    pub fn ok_count(&self, generator_tag: &str) -> usize {
        self.records
            .values()
            .filter(|r| r.generator_tag == generator_tag && r.is_ok())
            .count()
    }

    pub fn load(path: &Path) -> Result<Self, ReasoningError> {
        let mut store = Self::new();
        let reader = BufReader::new(File::open(path)?);
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ReasoningRecord = serde_json::from_str(&line).map_err(|e| ReasoningError::MalformedRecord {
                line: idx + 1,
                reason: e.to_string(),
            })?;
            if record.is_ok() && record.reasoning_text.trim().is_empty() {
                return Err(ReasoningError::MalformedRecord {
                    line: idx + 1,
                    reason: "ok record with empty reasoning_text".into(),
                });
            }
            store.insert(record);
        }
        Ok(store)
    }

    /// Loads `path` if it exists, otherwise starts empty.
    pub fn load_or_default(path: &Path) -> Result<Self, ReasoningError> {
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::new())
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), ReasoningError> {
        let mut out = BufWriter::new(File::create(path)?);
        for record in self.records() {
            serde_json::to_writer(&mut out, record).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn get_reasoning<'a>(store: &'a ReasoningStore, instance_id: &str, generator_tag: &str) -> Result<&'a str, ReasoningError> {
    match store.record(instance_id, generator_tag) {
        Some(r) if r.is_ok() => Ok(&r.reasoning_text),
        found => Err(ReasoningError::NotFound {
            instance_id: instance_id.into(),
            generator_tag: generator_tag.into(),
            reason: if found.is_some() {
                NotFoundReason::GenerationFailed
            } else {
                NotFoundReason::NeverGenerated
            },
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct BuildSummary {
    pub skipped: usize,
    pub generated: usize,
    pub failed: usize,
}

fn generate_one(
    instance: &PuzzleInstance,
    gateway: &Gateway,
    params: &GenerationParams,
    generator_tag: &str,
    max_chars: usize,
) -> Result<ReasoningRecord, GatewayError> {
    let prompt = match render_reasoning_request(instance) {
        Ok(p) => p,
        Err(e) => return Ok(ReasoningRecord::failed(&instance.id, generator_tag, e.to_string())),
    };
    match gateway.generate(&prompt, params) {
        Ok(completion) => {
            let text = completion.text.trim().to_string();
            let chars = text.chars().count();
            Ok(if text.is_empty() {
                ReasoningRecord::failed(&instance.id, generator_tag, "empty generation".into())
            } else if chars > max_chars {
                ReasoningRecord::failed(
                    &instance.id,
                    generator_tag,
                    format!("generation has {chars} characters, limit is {max_chars}"),
                )
            } else {
                ReasoningRecord::ok(&instance.id, generator_tag, text)
            })
        }
        Err(GatewayError::AuthMissing(var)) => Err(GatewayError::AuthMissing(var)),
        Err(e) => Ok(ReasoningRecord::failed(&instance.id, generator_tag, e.to_string())),
    }
}

/// Generates reasoning for every instance of `split` lacking an ok record under `generator_tag`.
///
/// Work is spread over the gateway's in-flight bound. Per-instance failures are
/// recorded; only a missing credential aborts the pass.
pub fn build_reasoning_store(
    store: &mut ReasoningStore,
    split: &DatasetSplit,
    gateway: &Gateway,
    params: &GenerationParams,
    generator_tag: &str,
    max_chars: usize,
) -> Result<BuildSummary, ReasoningError> {
    let todo: Vec<&PuzzleInstance> = split
        .instances
        .iter()
        .filter(|i| !store.has_ok(&i.id, generator_tag))
        .collect();
    let mut summary = BuildSummary {
        skipped: split.len() - todo.len(),
        ..Default::default()
    };
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<ReasoningRecord>> = Mutex::new(Vec::with_capacity(todo.len()));
    let auth_failure: Mutex<Option<String>> = Mutex::new(None);
    let workers = gateway.max_in_flight().min(todo.len()).max(1);
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if auth_failure.lock().unwrap().is_some() {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(instance) = todo.get(i) else { break };
                match generate_one(instance, gateway, params, generator_tag, max_chars) {
                    Ok(record) => results.lock().unwrap().push(record),
                    Err(GatewayError::AuthMissing(var)) => {
                        *auth_failure.lock().unwrap() = Some(var);
                        break;
                    }
                    Err(_) => unreachable!("generate_one only surfaces AuthMissing"),
                }
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    for record in results {
        if record.is_ok() {
            summary.generated += 1;
        } else {
            summary.failed += 1;
        }
        store.insert(record);
    }
    if let Some(var) = auth_failure.into_inner().unwrap() {
        return Err(ReasoningError::AuthMissing(var));
    }
    Ok(summary)
}

#[derive(Debug, Deserialize)]
struct ImportLine {
    instance_id: String,
    #[serde(alias = "reasoning")]
    reasoning_text: String,
}

/// Bulk-imports externally produced reasoning (`{instance_id, reasoning_text}` per line) under `generator_tag`.
pub fn import_reasoning(
    store: &mut ReasoningStore,
    path: &Path,
    generator_tag: &str,
    max_chars: usize,
) -> Result<BuildSummary, ReasoningError> {
    let reader = BufReader::new(File::open(path)?);
    let mut summary = BuildSummary::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: ImportLine = serde_json::from_str(&line).map_err(|e| ReasoningError::MalformedRecord {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        let text = item.reasoning_text.trim().to_string();
        let chars = text.chars().count();
        let record = if text.is_empty() {
            ReasoningRecord::failed(&item.instance_id, generator_tag, "empty reasoning".into())
        } else if chars > max_chars {
            ReasoningRecord::failed(
                &item.instance_id,
                generator_tag,
                format!("reasoning has {chars} characters, limit is {max_chars}"),
            )
        } else {
            ReasoningRecord::ok(&item.instance_id, generator_tag, text)
        };
        if record.is_ok() {
            summary.generated += 1;
        } else {
            summary.failed += 1;
        }
        store.insert(record);
    }
    Ok(summary)
}
