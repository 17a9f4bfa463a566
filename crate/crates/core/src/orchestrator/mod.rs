//! Experiment configuration, planning, execution, resumption and reporting.

pub mod config;
pub mod driver;
pub mod plan;
pub mod report;
pub mod run;

use thiserror::Error;

use crate::adjudicator::ScoreError;
use crate::dataset::{DatasetError, Subtask};
use crate::gateway::GatewayError;
use crate::prompt::PromptError;
use crate::reasoning::ReasoningError;
use crate::retrieval::RetrievalError;

pub use config::{DataConfig, EmbedderConfig, ExperimentConfig, MatrixBlock, ReasoningSettings, RetrievalSettings};
pub use driver::Workspace;
pub use plan::{plan_experiments, RunSpec};
pub use report::emit_report;
pub use run::{execute_run, CheckpointEntry, ExecuteOptions, RunInputs, RunManifest, RunResult};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("static exemplar '{id}' is not in the {subtask} train split")]
    UnknownExemplarId { subtask: Subtask, id: String },
    #[error("missing store: {0}")]
    MissingStore(String),
    #[error("no usable reasoning from '{generator_tag}' for {} exemplar(s): {}", instance_ids.len(), instance_ids.join(", "))]
    MissingReasoning {
        generator_tag: String,
        instance_ids: Vec<String>,
    },
    #[error("run interrupted after {completed} of {total} instances")]
    Interrupted { completed: usize, total: usize },
    #[error("no run results to report")]
    EmptyResults,
    #[error("corrupt run artifact: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Reasoning(#[from] ReasoningError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
