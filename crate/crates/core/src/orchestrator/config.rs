//! Declarative experiment configuration (TOML).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::OrchestratorError;
use crate::dataset::Subtask;
use crate::gateway::{GenerationParams, ProviderProfile};
use crate::prompt::{ExampleSource, ReasoningSource, StrategyKind};
use crate::reasoning::DEFAULT_MAX_REASONING_CHARS;
use crate::retrieval::{EmbedInput, ExemplarOrder, HttpEmbeddingConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Directory holding `<subtask>_<role>.jsonl` files. Relative to the config file.
    pub dir: PathBuf,
    #[serde(default)]
    pub group_from_id_suffix: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSettings {
    pub order_in_prompt: ExemplarOrder,
    pub embed_input: EmbedInput,
    /// Key into `[embedders]` used when a store has to be computed.
    pub embedder: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReasoningSettings {
    /// Generator tag used for `self_generated` runs.
    pub self_generated: Option<String>,
    /// Generator tag used for `external_generated` runs.
    pub external_generated: Option<String>,
    pub max_chars: usize,
}

impl Default for ReasoningSettings {
    fn default() -> Self {
        Self {
            self_generated: None,
            external_generated: None,
            max_chars: DEFAULT_MAX_REASONING_CHARS,
        }
    }
}

impl ReasoningSettings {
    pub fn tag_for(&self, source: ReasoningSource) -> Option<&str> {
        match source {
            ReasoningSource::None => None,
            ReasoningSource::SelfGenerated => self.self_generated.as_deref(),
            ReasoningSource::ExternalGenerated => self.external_generated.as_deref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderConfig {
    Precomputed { path: PathBuf },
    Http(Box<HttpEmbeddingConfig>),
}

/// One block of axes; the planner expands their cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixBlock {
    pub provider: String,
    pub subtasks: Vec<Subtask>,
    pub kinds: Vec<StrategyKind>,
    #[serde(default)]
    pub shots: Vec<usize>,
    #[serde(default = "default_sources")]
    pub example_sources: Vec<ExampleSource>,
    #[serde(default = "default_reasoning")]
    pub reasoning_sources: Vec<ReasoningSource>,
    #[serde(default)]
    pub reask_unparsed: bool,
}

fn default_sources() -> Vec<ExampleSource> {
    vec![ExampleSource::Static]
}

fn default_reasoning() -> Vec<ReasoningSource> {
    vec![ReasoningSource::None]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub params: GenerationParams,
    #[serde(default)]
    pub retrieval: RetrievalSettings,
    #[serde(default)]
    pub reasoning: ReasoningSettings,
    /// Explicit static exemplar ids per subtask; otherwise the first train instances.
    #[serde(default)]
    pub static_exemplars: BTreeMap<Subtask, Vec<String>>,
    #[serde(default)]
    pub providers: BTreeMap<String, ProviderProfile>,
    #[serde(default)]
    pub embedders: BTreeMap<String, EmbedderConfig>,
    #[serde(default)]
    pub matrix: Vec<MatrixBlock>,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, OrchestratorError> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| OrchestratorError::InvalidConfig(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, OrchestratorError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| OrchestratorError::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.resolve(&self.data.dir)
    }

    pub fn provider(&self, name: &str) -> Result<&ProviderProfile, OrchestratorError> {
        self.providers
            .get(name)
            .ok_or_else(|| OrchestratorError::InvalidConfig(format!("unknown provider '{name}'")))
    }

    fn validate(&self) -> Result<(), OrchestratorError> {
        let invalid = |m: String| OrchestratorError::InvalidConfig(m);
        self.params.validate().map_err(invalid)?;
        for (name, profile) in &self.providers {
            profile.validate().map_err(|e| invalid(format!("provider '{name}': {e}")))?;
        }
        if let Some(name) = &self.retrieval.embedder {
            if !self.embedders.contains_key(name) {
                return Err(invalid(format!("unknown embedder '{name}'")));
            }
        }
        if self.reasoning.max_chars == 0 {
            return Err(invalid("reasoning.max_chars must be positive".into()));
        }
        for (i, block) in self.matrix.iter().enumerate() {
            self.provider(&block.provider)?;
            if block.subtasks.is_empty() || block.kinds.is_empty() {
                return Err(invalid(format!("matrix block {i}: subtasks and kinds must be non-empty")));
            }
            if block.kinds.contains(&StrategyKind::FewShot) {
                if block.shots.is_empty() || block.shots.contains(&0) {
                    return Err(invalid(format!("matrix block {i}: few_shot needs shots >= 1")));
                }
                if block.example_sources.is_empty() || block.reasoning_sources.is_empty() {
                    return Err(invalid(format!("matrix block {i}: empty source axis")));
                }
                for source in &block.reasoning_sources {
                    if *source != ReasoningSource::None && self.reasoning.tag_for(*source).is_none() {
                        return Err(invalid(format!(
                            "matrix block {i}: reasoning source {source:?} has no generator tag in [reasoning]"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
