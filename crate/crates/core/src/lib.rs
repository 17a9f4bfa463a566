//! Evaluation harness for prompting strategies on multiple-choice
//! lateral-thinking puzzles.
//!
//! The pipeline runs dataset loading, exemplar retrieval, prompt rendering,
//! cached generation, reasoning stores, answer extraction and scoring, all
//! driven from a declarative experiment matrix.

pub mod adjudicator;
pub mod dataset;
pub mod gateway;
pub mod jsonpath;
pub mod orchestrator;
pub mod prompt;
pub mod reasoning;
pub mod retrieval;

pub use adjudicator::{extract_choice, score_run, MetricsReport, Prediction};
pub use dataset::{DatasetSplit, PuzzleInstance, SplitRole, Subtask, Variant};
pub use gateway::{Gateway, GenerationParams};
pub use orchestrator::{execute_run, plan_experiments, ExperimentConfig, RunSpec};
pub use prompt::{render_prompt, Strategy};
