//! Question embeddings and exact cosine top-n selection of training exemplars.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dataset::{DatasetSplit, PuzzleInstance};
use crate::jsonpath;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("embedding store is empty")]
    EmptyStore,
    #[error("store mixes provider tags '{0}' and '{1}'")]
    ProviderTagMismatch(String, String),
    #[error("duplicate embedding for '{0}'")]
    DuplicateId(String),
    #[error("no embedding for '{0}'")]
    MissingEmbedding(String),
    #[error("malformed embedding record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub instance_id: String,
    pub provider_tag: String,
    pub vector: Vec<f64>,
}

impl EmbeddingRecord {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Immutable map of instance id to embedding, all from one provider and of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    provider_tag: String,
    dim: usize,
    records: BTreeMap<String, EmbeddingRecord>,
}

impl EmbeddingStore {
    pub fn from_records(records: Vec<EmbeddingRecord>) -> Result<Self, RetrievalError> {
        let first = records.first().ok_or(RetrievalError::EmptyStore)?;
        let provider_tag = first.provider_tag.clone();
        let dim = first.dim();
        let mut map = BTreeMap::new();
        for record in records {
            if record.provider_tag != provider_tag {
                return Err(RetrievalError::ProviderTagMismatch(provider_tag, record.provider_tag));
            }
            if record.dim() != dim {
                return Err(RetrievalError::DimensionMismatch {
                    expected: dim,
                    found: record.dim(),
                });
            }
            if dim == 0 || is_zero(&record.vector) {
                return Err(RetrievalError::ZeroVector);
            }
            if map.contains_key(&record.instance_id) {
                return Err(RetrievalError::DuplicateId(record.instance_id));
            }
            map.insert(record.instance_id.clone(), record);
        }
        Ok(Self {
            provider_tag,
            dim,
            records: map,
        })
    }

    pub fn provider_tag(&self) -> &str {
        &self.provider_tag
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, instance_id: &str) -> Option<&EmbeddingRecord> {
        self.records.get(instance_id)
    }

    pub fn vector(&self, instance_id: &str) -> Result<&[f64], RetrievalError> {
        self.get(instance_id)
            .map(|r| r.vector.as_slice())
            .ok_or_else(|| RetrievalError::MissingEmbedding(instance_id.to_string()))
    }

    /// Records in ascending id order.
    pub fn records(&self) -> impl Iterator<Item = &EmbeddingRecord> {
        self.records.values()
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        Self::from_records(read_embedding_file(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let mut out = BufWriter::new(File::create(path)?);
        for record in self.records() {
            serde_json::to_writer(&mut out, record).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn read_embedding_file(path: &Path) -> Result<Vec<EmbeddingRecord>, RetrievalError> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EmbeddingRecord =
            serde_json::from_str(&line).map_err(|e| RetrievalError::MalformedRecord {
                line: idx + 1,
                reason: e.to_string(),
            })?;
        records.push(record);
    }
    Ok(records)
}

fn is_zero(v: &[f64]) -> bool {
    v.iter().all(|x| *x == 0.0)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, RetrievalError> {
    if a.len() != b.len() {
        return Err(RetrievalError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if is_zero(a) || is_zero(b) {
        return Err(RetrievalError::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    // + 0.0 turns -0.0 into 0.0 so orthogonal candidates tie under total_cmp
    Ok((dot / (norm(a) * norm(b))).clamp(-1.0, 1.0) + 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExemplarOrder {
    #[default]
    MostSimilarFirst,
    MostSimilarLast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub n: usize,
    #[serde(default)]
    pub order_in_prompt: ExemplarOrder,
}

impl RetrievalConfig {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            order_in_prompt: ExemplarOrder::default(),
        }
    }

    /// Reorders a descending-similarity list for placement in the prompt.
    pub fn arrange(&self, mut ids: Vec<String>) -> Vec<String> {
        if self.order_in_prompt == ExemplarOrder::MostSimilarLast {
            ids.reverse();
        }
        ids
    }
}

/// Ids of the `cfg.n` store entries most similar to `query_vec`, most similar first.
///
/// Ties are broken by ascending instance id; `query_id` itself is never returned.
pub fn top_n_similar(
    query_id: &str,
    query_vec: &[f64],
    store: &EmbeddingStore,
    cfg: &RetrievalConfig,
) -> Result<Vec<String>, RetrievalError> {
    if store.is_empty() {
        return Err(RetrievalError::EmptyStore);
    }
    let mut scored = Vec::with_capacity(store.len());
    for record in store.records() {
        if record.instance_id == query_id {
            continue;
        }
        let sim = cosine_similarity(query_vec, &record.vector)?;
        scored.push((sim, record.instance_id.as_str()));
    }
    scored.sort_by(|a, b| match b.0.total_cmp(&a.0) {
        Ordering::Equal => a.1.cmp(b.1),
        other => other,
    });
    Ok(scored
        .into_iter()
        .take(cfg.n)
        .map(|(_, id)| id.to_string())
        .collect())
}

/// Which text of an instance gets embedded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedInput {
    #[default]
    Question,
    QuestionWithChoices,
}

impl EmbedInput {
    pub fn text_for(self, instance: &PuzzleInstance) -> String {
        match self {
            EmbedInput::Question => instance.question.clone(),
            EmbedInput::QuestionWithChoices => {
                let mut text = instance.question.clone();
                for choice in &instance.choices {
                    text.push('\n');
                    text.push_str(choice);
                }
                text
            }
        }
    }
}

pub fn embedding_inputs(split: &DatasetSplit, input: EmbedInput) -> Vec<(String, String)> {
    split
        .instances
        .iter()
        .map(|i| (i.id.clone(), input.text_for(i)))
        .collect()
}

/// Source of question vectors. Pooling and normalization are the provider's business.
pub trait EmbeddingProvider: Send + Sync {
    fn provider_tag(&self) -> &str;

    /// One vector per `(id, text)` pair, in input order.
    fn embed(&self, items: &[(String, String)]) -> Result<Vec<Vec<f64>>, RetrievalError>;
}

pub fn embed_questions(
    provider: &dyn EmbeddingProvider,
    items: &[(String, String)],
) -> Result<Vec<EmbeddingRecord>, RetrievalError> {
    if items.is_empty() {
        return Err(RetrievalError::ProviderUnavailable("nothing to embed".into()));
    }
    let vectors = provider.embed(items)?;
    if vectors.len() != items.len() {
        return Err(RetrievalError::ProviderUnavailable(format!(
            "provider returned {} vectors for {} inputs",
            vectors.len(),
            items.len()
        )));
    }
    let dim = vectors[0].len();
    let mut records = Vec::with_capacity(items.len());
    for ((id, _), vector) in items.iter().zip(vectors) {
        if vector.len() != dim {
            return Err(RetrievalError::DimensionMismatch {
                expected: dim,
                found: vector.len(),
            });
        }
        if dim == 0 || is_zero(&vector) {
            return Err(RetrievalError::ZeroVector);
        }
        records.push(EmbeddingRecord {
            instance_id: id.clone(),
            provider_tag: provider.provider_tag().to_string(),
            vector,
        });
    }
    Ok(records)
}

/// Serves vectors from a JSON-Lines file of `{instance_id, provider_tag, vector}`.
pub struct PrecomputedEmbeddings {
    store: EmbeddingStore,
}

impl PrecomputedEmbeddings {
    pub fn open(path: &Path) -> Result<Self, RetrievalError> {
        Ok(Self {
            store: EmbeddingStore::load(path)?,
        })
    }

    pub fn from_store(store: EmbeddingStore) -> Self {
        Self { store }
    }
}

impl EmbeddingProvider for PrecomputedEmbeddings {
    fn provider_tag(&self) -> &str {
        self.store.provider_tag()
    }

    fn embed(&self, items: &[(String, String)]) -> Result<Vec<Vec<f64>>, RetrievalError> {
        items
            .iter()
            .map(|(id, _)| self.store.vector(id).map(<[f64]>::to_vec))
            .collect()
    }
}

/// Remote embedding endpoint speaking JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpEmbeddingConfig {
    pub endpoint: String,
    pub provider_tag: String,
    /// Environment variable holding a bearer token, if the endpoint needs one.
    #[serde(default)]
    pub auth_env: Option<String>,
    /// Dotted path in the request body receiving the list of texts.
    #[serde(default = "default_input_path")]
    pub input_path: String,
    /// Dotted path in the response to the list of vectors.
    #[serde(default = "default_vectors_path")]
    pub vectors_path: String,
    /// Optional dotted path inside each list element to the vector.
    #[serde(default)]
    pub vector_field: Option<String>,
    #[serde(default)]
    pub body: Option<Value>,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_input_path() -> String {
    "input".into()
}

fn default_vectors_path() -> String {
    "data".into()
}

fn default_batch_size() -> usize {
    64
}

fn default_timeout_secs() -> u64 {
    60
}

pub struct HttpEmbeddingProvider {
    config: HttpEmbeddingConfig,
    agent: ureq::Agent,
    token: Option<String>,
}

impl HttpEmbeddingProvider {
    pub fn new(config: HttpEmbeddingConfig) -> Result<Self, RetrievalError> {
        let token = match &config.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                RetrievalError::ProviderUnavailable(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, agent, token })
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, RetrievalError> {
        let unavailable = |msg: String| RetrievalError::ProviderUnavailable(msg);
        let mut body = self.config.body.clone().unwrap_or_else(|| Value::Object(Default::default()));
        jsonpath::set(&mut body, &self.config.input_path, Value::from(texts.to_vec()))
            .map_err(unavailable)?;
        let mut request = self.agent.post(&self.config.endpoint);
        if let Some(token) = &self.token {
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = request.send_json(&body).map_err(|e| unavailable(e.to_string()))?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(unavailable(format!("HTTP {status}")));
        }
        let payload: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| unavailable(e.to_string()))?;
        let list = jsonpath::get(&payload, &self.config.vectors_path)
            .and_then(Value::as_array)
            .ok_or_else(|| unavailable(format!("no array at '{}'", self.config.vectors_path)))?;
        list.iter()
            .map(|item| {
                let v = match &self.config.vector_field {
                    Some(field) => jsonpath::get(item, field),
                    None => Some(item),
                };
                v.and_then(Value::as_array)
                    .and_then(|xs| xs.iter().map(Value::as_f64).collect::<Option<Vec<f64>>>())
                    .ok_or_else(|| unavailable("response element is not a numeric vector".into()))
            })
            .collect()
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn provider_tag(&self) -> &str {
        &self.config.provider_tag
    }

    fn embed(&self, items: &[(String, String)]) -> Result<Vec<Vec<f64>>, RetrievalError> {
        let texts: Vec<&str> = items.iter().map(|(_, t)| t.as_str()).collect();
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.config.batch_size.max(1)) {
            out.extend(self.embed_batch(chunk)?);
        }
        Ok(out)
    }
}

/// Conventional file name for a persisted store.
pub fn store_path(dir: &Path, subtask: crate::dataset::Subtask, role: crate::dataset::SplitRole) -> PathBuf {
    dir.join(format!("{subtask}_{role}.jsonl"))
}
