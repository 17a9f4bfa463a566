//! Expanding a configuration into concrete, content-identified run specs.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::OrchestratorError;
use crate::dataset::{DatasetSplit, Subtask};
use crate::gateway::GenerationParams;
use crate::prompt::{ExampleSource, ReasoningSource, Strategy, StrategyKind};
use crate::retrieval::RetrievalConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub subtask: Subtask,
    pub strategy: Strategy,
    pub static_exemplar_ids: Option<Vec<String>>,
    pub retrieval: Option<RetrievalConfig>,
    pub generator_tag: Option<String>,
    pub params: GenerationParams,
    pub provider: String,
    #[serde(default)]
    pub reask_unparsed: bool,
    pub run_id: String,
}

impl RunSpec {
    /// Builds a spec and derives its `run_id`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        subtask: Subtask,
        strategy: Strategy,
        static_exemplar_ids: Option<Vec<String>>,
        retrieval: Option<RetrievalConfig>,
        generator_tag: Option<String>,
        params: GenerationParams,
        provider: impl Into<String>,
        reask_unparsed: bool,
    ) -> Result<Self, OrchestratorError> {
        let mut spec = Self {
            subtask,
            strategy,
            static_exemplar_ids,
            retrieval,
            generator_tag,
            params,
            provider: provider.into(),
            reask_unparsed,
            run_id: String::new(),
        };
        spec.validate()?;
        spec.run_id = spec.compute_run_id();
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let invalid = |m: &str| Err(OrchestratorError::InvalidConfig(format!("{}: {m}", self.strategy.label())));
        self.strategy
            .validate()
            .map_err(|e| OrchestratorError::InvalidConfig(e.to_string()))?;
        match self.strategy.kind {
            StrategyKind::FewShot => match self.strategy.example_source {
                ExampleSource::Static => {
                    if self.retrieval.is_some() {
                        return invalid("static runs take no retrieval config");
                    }
                    match &self.static_exemplar_ids {
                        Some(ids) if ids.len() == self.strategy.shots => {}
                        Some(_) => return invalid("static exemplar list length differs from shots"),
                        None => return invalid("static runs need exemplar ids"),
                    }
                }
                ExampleSource::Dynamic => {
                    if self.static_exemplar_ids.is_some() {
                        return invalid("dynamic runs take no static exemplar ids");
                    }
                    match &self.retrieval {
                        Some(r) if r.n == self.strategy.shots => {}
                        Some(_) => return invalid("retrieval n differs from shots"),
                        None => return invalid("dynamic runs need a retrieval config"),
                    }
                }
            },
            _ => {
                if self.static_exemplar_ids.is_some() || self.retrieval.is_some() {
                    return invalid("zero-shot runs take no exemplars");
                }
            }
        }
        if self.strategy.uses_reasoning() != self.generator_tag.is_some() {
            return invalid("generator_tag must be set exactly when reasoning is used");
        }
        self.params.validate().map_err(OrchestratorError::InvalidConfig)
    }

    /// First 16 hex chars of SHA-256 over every influencing field plus the template version.
    pub fn compute_run_id(&self) -> String {
        #[derive(Serialize)]
        struct Material<'a> {
            subtask: Subtask,
            strategy: &'a Strategy,
            static_exemplar_ids: &'a Option<Vec<String>>,
            retrieval: &'a Option<RetrievalConfig>,
            generator_tag: &'a Option<String>,
            params: &'a GenerationParams,
            provider: &'a str,
            reask_unparsed: bool,
            template_version: &'a str,
        }
        let material = Material {
            subtask: self.subtask,
            strategy: &self.strategy,
            static_exemplar_ids: &self.static_exemplar_ids,
            retrieval: &self.retrieval,
            generator_tag: &self.generator_tag,
            params: &self.params,
            provider: &self.provider,
            reask_unparsed: self.reask_unparsed,
            template_version: self.strategy.template_version(),
        };
        let bytes = serde_json::to_vec(&material).expect("run spec serializes");
        hex::encode(Sha256::digest(&bytes))[..16].to_string()
    }

    /// Same spec executed through another provider profile, optionally under another model.
    pub fn with_provider(&self, provider: &str, model: Option<&str>) -> Self {
        let mut spec = self.clone();
        spec.provider = provider.to_string();
        if let Some(model) = model {
            spec.params.provider_model = model.to_string();
        }
        spec.run_id = spec.compute_run_id();
        spec
    }
}

/// Cartesian expansion of every matrix block, deduplicated by `run_id`, in declaration order.
///
/// `train` supplies the training splits used to resolve and check static exemplar ids.
pub fn plan_experiments(
    config: &ExperimentConfig,
    train: &BTreeMap<Subtask, DatasetSplit>,
) -> Result<Vec<RunSpec>, OrchestratorError> {
    let mut seen = HashSet::new();
    let mut specs = Vec::new();
    for block in &config.matrix {
        config.provider(&block.provider)?;
        for &subtask in &block.subtasks {
            for &kind in &block.kinds {
                let strategies: Vec<Strategy> = match kind {
                    StrategyKind::ZeroDirect => vec![Strategy::zero_direct()],
                    StrategyKind::ZeroDefinition => vec![Strategy::zero_definition()],
                    StrategyKind::FewShot => {
                        let mut v = Vec::new();
                        for &shots in &block.shots {
                            for &source in &block.example_sources {
                                for &reasoning in &block.reasoning_sources {
                                    v.push(Strategy::few_shot(shots, source, reasoning));
                                }
                            }
                        }
                        v
                    }
                };
                for strategy in strategies {
                    let spec = build_spec(config, train, subtask, strategy, &block.provider, block.reask_unparsed)?;
                    if seen.insert(spec.run_id.clone()) {
                        specs.push(spec);
                    }
                }
            }
        }
    }
    Ok(specs)
}

fn build_spec(
    config: &ExperimentConfig,
    train: &BTreeMap<Subtask, DatasetSplit>,
    subtask: Subtask,
    strategy: Strategy,
    provider: &str,
    reask_unparsed: bool,
) -> Result<RunSpec, OrchestratorError> {
    let mut static_ids = None;
    let mut retrieval = None;
    if strategy.kind == StrategyKind::FewShot {
        match strategy.example_source {
            ExampleSource::Static => static_ids = Some(static_exemplars(config, train, subtask, strategy.shots)?),
            ExampleSource::Dynamic => {
                retrieval = Some(RetrievalConfig {
                    n: strategy.shots,
                    order_in_prompt: config.retrieval.order_in_prompt,
                })
            }
        }
    }
    let generator_tag = match strategy.reasoning_source {
        ReasoningSource::None => None,
        source => Some(
            config
                .reasoning
                .tag_for(source)
                .ok_or_else(|| OrchestratorError::InvalidConfig(format!("no generator tag for {source:?}")))?
                .to_string(),
        ),
    };
    let params = super::driver::params_for(config, provider)?;
    RunSpec::new(
        subtask,
        strategy,
        static_ids,
        retrieval,
        generator_tag,
        params,
        provider,
        reask_unparsed,
    )
}

fn static_exemplars(
    config: &ExperimentConfig,
    train: &BTreeMap<Subtask, DatasetSplit>,
    subtask: Subtask,
    shots: usize,
) -> Result<Vec<String>, OrchestratorError> {
    let split = train
        .get(&subtask)
        .ok_or_else(|| OrchestratorError::InvalidConfig(format!("no {subtask} train split loaded")))?;
    let ids: Vec<String> = match config.static_exemplars.get(&subtask) {
        Some(listed) => {
            for id in listed {
                if split.get(id).is_none() {
                    return Err(OrchestratorError::UnknownExemplarId {
                        subtask,
                        id: id.clone(),
                    });
                }
            }
            listed.iter().take(shots).cloned().collect()
        }
        None => split.instances.iter().take(shots).map(|i| i.id.clone()).collect(),
    };
    if ids.len() < shots {
        return Err(OrchestratorError::InvalidConfig(format!(
            "{shots}-shot {subtask} run needs {shots} static exemplars, only {} available",
            ids.len()
        )));
    }
    Ok(ids)
}
