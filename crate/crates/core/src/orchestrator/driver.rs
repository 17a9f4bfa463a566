//! Wiring a configuration to files on disk: dataset loading, provider and
//! gateway construction, embedding and reasoning stores, and whole-matrix runs.
//!
//! Output layout under the workspace directory:
//!
//! ```text
//! embeddings/<subtask>_<role>.jsonl
//! reasoning/<subtask>.jsonl
//! runs/<run_id>/...
//! reports/<subtask>_results.{csv,md}, <subtask>_plot.csv
//! cache/<2 hex>/<key>.json
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use super::config::{EmbedderConfig, ExperimentConfig};
use super::plan::{plan_experiments, RunSpec};
use super::report::emit_report;
use super::run::{execute_run, ExecuteOptions, RunInputs, RunResult};
use super::OrchestratorError;
use crate::dataset::{load_split_with, DatasetSplit, LoadOptions, SplitRole, Subtask};
use crate::gateway::{
    CompletionCache, Gateway, GenerationParams, HttpProvider, MockMode, MockProvider, ProfileKind, ProviderProfile, ReplayProvider,
    TextProvider,
};
use crate::prompt::{ExampleSource, RenderedPrompt, StrategyKind};
use crate::reasoning::{build_reasoning_store, BuildSummary, ReasoningStore};
use crate::retrieval::{
    embed_questions, embedding_inputs, store_path, EmbeddingProvider, EmbeddingStore, HttpEmbeddingProvider,
    PrecomputedEmbeddings,
};

/// Name that always resolves to a cache-only provider.
pub const REPLAY_PROVIDER: &str = "replay";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workspace {
    pub out_dir: PathBuf,
    pub cache_dir: PathBuf,
}

impl Workspace {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        let out_dir = out_dir.into();
        Self {
            cache_dir: out_dir.join("cache"),
            out_dir,
        }
    }

    pub fn with_cache_dir(mut self, cache_dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = cache_dir.into();
        self
    }

    pub fn embeddings_path(&self, subtask: Subtask, role: SplitRole) -> PathBuf {
        store_path(&self.out_dir.join("embeddings"), subtask, role)
    }

    pub fn reasoning_path(&self, subtask: Subtask) -> PathBuf {
        self.out_dir.join("reasoning").join(format!("{subtask}.jsonl"))
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        super::run::run_dir(&self.out_dir, run_id)
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.out_dir.join("reports")
    }
}

/// Command-line adjustments applied on top of a provider profile.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GatewayOverrides {
    /// Execute every planned run through this provider instead.
    pub provider: Option<String>,
    pub max_in_flight: Option<usize>,
    pub rpm: Option<u32>,
}

/// Train and test splits keyed by subtask.
#[derive(Debug, Clone, Default)]
pub struct Datasets {
    pub train: BTreeMap<Subtask, DatasetSplit>,
    pub test: BTreeMap<Subtask, DatasetSplit>,
}

impl Datasets {
    pub fn split(&self, subtask: Subtask, role: SplitRole) -> Result<&DatasetSplit, OrchestratorError> {
        let map = match role {
            SplitRole::Train => &self.train,
            SplitRole::Test => &self.test,
        };
        map.get(&subtask)
            .ok_or_else(|| OrchestratorError::MissingStore(format!("{subtask} {role} split")))
    }
}

/// Path of a split file inside the configured data directory.
pub fn split_path(config: &ExperimentConfig, subtask: Subtask, role: SplitRole) -> PathBuf {
    config.data_dir().join(format!("{subtask}_{role}.jsonl"))
}

/// Subtasks mentioned by any matrix block, or all of them when there is no matrix.
pub fn configured_subtasks(config: &ExperimentConfig) -> BTreeSet<Subtask> {
    let mut set: BTreeSet<Subtask> = config.matrix.iter().flat_map(|b| b.subtasks.iter().copied()).collect();
    if set.is_empty() {
        set.extend(Subtask::ALL);
    }
    set
}

pub fn load_datasets(config: &ExperimentConfig, subtasks: &BTreeSet<Subtask>) -> Result<Datasets, OrchestratorError> {
    let options = LoadOptions {
        group_from_id_suffix: config.data.group_from_id_suffix,
    };
    let mut data = Datasets::default();
    for &subtask in subtasks {
        for role in [SplitRole::Train, SplitRole::Test] {
            let split = load_split_with(&split_path(config, subtask, role), subtask, role, options)?;
            match role {
                SplitRole::Train => data.train.insert(subtask, split),
                SplitRole::Test => data.test.insert(subtask, split),
            };
        }
    }
    Ok(data)
}

pub fn resolve_profile(config: &ExperimentConfig, name: &str) -> Result<ProviderProfile, OrchestratorError> {
    match config.providers.get(name) {
        Some(p) => Ok(p.clone()),
        None if name == REPLAY_PROVIDER => Ok(ProviderProfile::replay()),
        None => Err(OrchestratorError::InvalidConfig(format!("unknown provider '{name}'"))),
    }
}

/// Generation parameters for `provider`, with the profile's model when it names one.
pub fn params_for(config: &ExperimentConfig, provider: &str) -> Result<GenerationParams, OrchestratorError> {
    let mut params = config.params.clone();
    if let Some(model) = resolve_profile(config, provider)?.model {
        params.provider_model = model;
    }
    Ok(params)
}

/// Gold answers (`Option k`) keyed by question text over every loaded split.
pub fn gold_answer_key(data: &Datasets) -> HashMap<String, String> {
    data.train
        .values()
        .chain(data.test.values())
        .flat_map(|s| &s.instances)
        .map(|i| (i.question.clone(), format!("Option {}", i.label + 1)))
        .collect()
}

pub fn build_text_provider(
    name: &str,
    profile: &ProviderProfile,
    data: &Datasets,
) -> Result<Arc<dyn TextProvider>, OrchestratorError> {
    Ok(match &profile.kind {
        ProfileKind::Http(http) => Arc::new(HttpProvider::new(name, (**http).clone())),
        ProfileKind::Mock(mock) => {
            let provider = match mock.mode {
                MockMode::Constant => MockProvider::constant(mock.answer.clone().unwrap_or_default()),
                MockMode::Gold => MockProvider::answer_key(gold_answer_key(data)),
            };
            Arc::new(provider.with_latency(Duration::from_millis(mock.latency_ms)))
        }
        ProfileKind::Replay => Arc::new(ReplayProvider),
    })
}

pub fn build_gateway(
    config: &ExperimentConfig,
    workspace: &Workspace,
    name: &str,
    overrides: &GatewayOverrides,
    data: &Datasets,
) -> Result<Gateway, OrchestratorError> {
    let mut profile = resolve_profile(config, name)?;
    if let Some(n) = overrides.max_in_flight {
        profile.max_in_flight = n;
    }
    if let Some(rpm) = overrides.rpm {
        profile.rpm = rpm;
    }
    profile.validate().map_err(OrchestratorError::InvalidConfig)?;
    let provider = build_text_provider(name, &profile, data)?;
    let cache = CompletionCache::open(&workspace.cache_dir)?;
    Ok(Gateway::from_profile(provider, &profile, Some(cache)))
}

pub fn build_embedder(config: &ExperimentConfig, name: &str) -> Result<Box<dyn EmbeddingProvider>, OrchestratorError> {
    let embedder = config
        .embedders
        .get(name)
        .ok_or_else(|| OrchestratorError::InvalidConfig(format!("unknown embedder '{name}'")))?;
    Ok(match embedder {
        EmbedderConfig::Precomputed { path } => Box::new(PrecomputedEmbeddings::open(&config.resolve(path))?),
        EmbedderConfig::Http(http) => Box::new(HttpEmbeddingProvider::new((**http).clone())?),
    })
}

/// Embeds `split` with `embedder` and writes the store to its workspace path.
pub fn compute_embeddings(
    config: &ExperimentConfig,
    workspace: &Workspace,
    embedder: &dyn EmbeddingProvider,
    split: &DatasetSplit,
) -> Result<EmbeddingStore, OrchestratorError> {
    let items = embedding_inputs(split, config.retrieval.embed_input);
    let store = EmbeddingStore::from_records(embed_questions(embedder, &items)?)?;
    let path = workspace.embeddings_path(split.subtask, split.role);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    store.save(&path)?;
    log::info!("wrote {} vectors to {}", store.len(), path.display());
    Ok(store)
}

/// Loads the workspace store for `split`, computing it with the configured embedder when absent.
pub fn ensure_embeddings(
    config: &ExperimentConfig,
    workspace: &Workspace,
    split: &DatasetSplit,
) -> Result<EmbeddingStore, OrchestratorError> {
    let path = workspace.embeddings_path(split.subtask, split.role);
    if path.exists() {
        return Ok(EmbeddingStore::load(&path)?);
    }
    let name = config.retrieval.embedder.as_deref().ok_or_else(|| {
        OrchestratorError::MissingStore(format!(
            "{} has no embeddings and no [retrieval] embedder is configured",
            path.display()
        ))
    })?;
    let embedder = build_embedder(config, name)?;
    compute_embeddings(config, workspace, embedder.as_ref(), split)
}

/// Fills the reasoning store of `subtask` for `generator_tag`, resuming past ok records.
pub fn generate_reasoning(
    config: &ExperimentConfig,
    workspace: &Workspace,
    data: &Datasets,
    subtask: Subtask,
    generator_tag: &str,
    provider: &str,
    gateway: &Gateway,
) -> Result<BuildSummary, OrchestratorError> {
    let split = data.split(subtask, SplitRole::Train)?;
    let params = params_for(config, provider)?;
    let path = workspace.reasoning_path(subtask);
    let mut store = ReasoningStore::load_or_default(&path)?;
    let result = build_reasoning_store(
        &mut store,
        split,
        gateway,
        &params,
        generator_tag,
        config.reasoning.max_chars,
    );
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    // keep whatever finished, even when a missing credential stopped the pass
    store.save(&path)?;
    Ok(result?)
}

/// Stores a run spec needs, loaded from the workspace.
pub struct LoadedInputs {
    pub train_embeddings: Option<EmbeddingStore>,
    pub test_embeddings: Option<EmbeddingStore>,
    pub reasoning: Option<ReasoningStore>,
}

impl LoadedInputs {
    pub fn load(
        config: &ExperimentConfig,
        workspace: &Workspace,
        data: &Datasets,
        spec: &RunSpec,
    ) -> Result<Self, OrchestratorError> {
        let dynamic = spec.strategy.kind == StrategyKind::FewShot && spec.strategy.example_source == ExampleSource::Dynamic;
        let (train_embeddings, test_embeddings) = if dynamic {
            (
                Some(ensure_embeddings(config, workspace, data.split(spec.subtask, SplitRole::Train)?)?),
                Some(ensure_embeddings(config, workspace, data.split(spec.subtask, SplitRole::Test)?)?),
            )
        } else {
            (None, None)
        };
        let reasoning = match spec.generator_tag {
            Some(_) => Some(ReasoningStore::load_or_default(&workspace.reasoning_path(spec.subtask))?),
            None => None,
        };
        Ok(Self {
            train_embeddings,
            test_embeddings,
            reasoning,
        })
    }

    pub fn inputs<'a>(&'a self, data: &'a Datasets, subtask: Subtask) -> Result<RunInputs<'a>, OrchestratorError> {
        Ok(RunInputs {
            train: data.split(subtask, SplitRole::Train)?,
            test: data.split(subtask, SplitRole::Test)?,
            train_embeddings: self.train_embeddings.as_ref(),
            test_embeddings: self.test_embeddings.as_ref(),
            reasoning: self.reasoning.as_ref(),
        })
    }
}

/// Prompts a spec would send, without contacting any provider.
pub fn render_run(
    config: &ExperimentConfig,
    workspace: &Workspace,
    data: &Datasets,
    spec: &RunSpec,
) -> Result<Vec<RenderedPrompt>, OrchestratorError> {
    let loaded = LoadedInputs::load(config, workspace, data, spec)?;
    let inputs = loaded.inputs(data, spec.subtask)?;
    let exemplars = super::run::select_exemplars(spec, &inputs)?;
    super::run::render_all(spec, &inputs, &exemplars)
}

/// Planned specs, rebound to the override provider when one is given.
pub fn plan_with_overrides(
    config: &ExperimentConfig,
    data: &Datasets,
    overrides: &GatewayOverrides,
) -> Result<Vec<RunSpec>, OrchestratorError> {
    let specs = plan_experiments(config, &data.train)?;
    Ok(match &overrides.provider {
        Some(p) => {
            let model = resolve_profile(config, p)?.model;
            let mut seen = BTreeSet::new();
            specs
                .into_iter()
                .map(|s| s.with_provider(p, model.as_deref()))
                .filter(|s| seen.insert(s.run_id.clone()))
                .collect()
        }
        None => specs,
    })
}

/// Plans, executes (resuming) every run and writes the reports.
pub fn run_all(
    config: &ExperimentConfig,
    workspace: &Workspace,
    overrides: &GatewayOverrides,
    options: &ExecuteOptions,
) -> Result<Vec<RunResult>, OrchestratorError> {
    let data = load_datasets(config, &configured_subtasks(config))?;
    let specs = plan_with_overrides(config, &data, overrides)?;
    let mut gateways: BTreeMap<String, Gateway> = BTreeMap::new();
    let mut results = Vec::with_capacity(specs.len());
    for spec in &specs {
        if !gateways.contains_key(&spec.provider) {
            let gw = build_gateway(config, workspace, &spec.provider, overrides, &data)?;
            gateways.insert(spec.provider.clone(), gw);
        }
        let gateway = &gateways[&spec.provider];
        log::info!("run {} ({} {})", spec.run_id, spec.subtask, spec.strategy.label());
        let loaded = LoadedInputs::load(config, workspace, &data, spec)?;
        let inputs = loaded.inputs(&data, spec.subtask)?;
        results.push(execute_run(spec, &inputs, gateway, &workspace.run_dir(&spec.run_id), options)?);
    }
    emit_report(&results, &workspace.reports_dir())?;
    Ok(results)
}

/// Loads finished runs from `runs/`, skipping directories without a manifest.
pub fn load_results(workspace: &Workspace) -> Result<Vec<RunResult>, OrchestratorError> {
    let runs = workspace.out_dir.join("runs");
    let mut results = Vec::new();
    if !runs.exists() {
        return Ok(results);
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&runs)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    dirs.sort();
    for dir in dirs {
        if has_manifest(&dir) {
            results.push(RunResult::load(&dir)?);
        }
    }
    Ok(results)
}

fn has_manifest(dir: &Path) -> bool {
    dir.join("manifest.json").is_file()
}
