//! Prompt rendering for every prompting strategy.
//!
//! All prompts are built from the text assets under `templates/`. Choices are
//! numbered from 1 in the rendered text even though labels are 0-based in the
//! data model.

pub mod template;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{PuzzleInstance, Subtask};

pub const DIRECT_TEMPLATE_VERSION: &str = "direct-v1";
pub const DEFINITION_TEMPLATE_VERSION: &str = "definition-v1";
pub const FEW_SHOT_TEMPLATE_VERSION: &str = "few-shot-v1";
pub const REASONING_REQUEST_TEMPLATE_VERSION: &str = "reasoning-request-v1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("no choices to format")]
    EmptyChoices,
    #[error("strategy expects {expected} exemplars, got {found}")]
    ShotMismatch { expected: usize, found: usize },
    #[error("exemplar '{exemplar}' is a {found} puzzle but the target is a {expected} puzzle")]
    SubtaskMismatch {
        exemplar: String,
        expected: Subtask,
        found: Subtask,
    },
    #[error("exemplar '{0}' has no reasoning text")]
    MissingReasoning(String),
    #[error("exemplar '{0}' carries reasoning but the strategy uses none")]
    UnexpectedReasoning(String),
    #[error("instance '{0}' has no distractor")]
    MissingDistractor(String),
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
    #[error("template uses unknown placeholder '{{{0}}}'")]
    UnknownPlaceholder(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    ZeroDirect,
    ZeroDefinition,
    FewShot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleSource {
    #[default]
    Static,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasoningSource {
    #[default]
    None,
    SelfGenerated,
    ExternalGenerated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Strategy {
    pub kind: StrategyKind,
    pub shots: usize,
    #[serde(default)]
    pub example_source: ExampleSource,
    #[serde(default)]
    pub reasoning_source: ReasoningSource,
}

impl Strategy {
    pub fn zero_direct() -> Self {
        Self::zero(StrategyKind::ZeroDirect)
    }

    pub fn zero_definition() -> Self {
        Self::zero(StrategyKind::ZeroDefinition)
    }

    fn zero(kind: StrategyKind) -> Self {
        Self {
            kind,
            shots: 0,
            example_source: ExampleSource::Static,
            reasoning_source: ReasoningSource::None,
        }
    }

    pub fn few_shot(shots: usize, example_source: ExampleSource, reasoning_source: ReasoningSource) -> Self {
        Self {
            kind: StrategyKind::FewShot,
            shots,
            example_source,
            reasoning_source,
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        match self.kind {
            StrategyKind::ZeroDirect | StrategyKind::ZeroDefinition => {
                if self.shots != 0 {
                    return Err(PromptError::InvalidStrategy("zero-shot strategies take 0 shots".into()));
                }
                if self.reasoning_source != ReasoningSource::None {
                    return Err(PromptError::InvalidStrategy("zero-shot strategies take no reasoning".into()));
                }
            }
            StrategyKind::FewShot => {
                if self.shots == 0 {
                    return Err(PromptError::InvalidStrategy("few-shot needs at least one shot".into()));
                }
            }
        }
        Ok(())
    }

    pub fn uses_reasoning(&self) -> bool {
        self.reasoning_source != ReasoningSource::None
    }

    pub fn template_version(&self) -> &'static str {
        match self.kind {
            StrategyKind::ZeroDirect => DIRECT_TEMPLATE_VERSION,
            StrategyKind::ZeroDefinition => DEFINITION_TEMPLATE_VERSION,
            StrategyKind::FewShot => FEW_SHOT_TEMPLATE_VERSION,
        }
    }

    /// Row label without the shot count, e.g. `SE + Reason`; used as a plot series name.
    pub fn family_label(&self) -> String {
        match self.kind {
            StrategyKind::ZeroDirect => "Direct Prompt".into(),
            StrategyKind::ZeroDefinition => "Definition Prompt".into(),
            StrategyKind::FewShot => {
                let mut label = match self.example_source {
                    ExampleSource::Static => "SE".to_string(),
                    ExampleSource::Dynamic => "DE".to_string(),
                };
                match self.reasoning_source {
                    ReasoningSource::None => {}
                    ReasoningSource::SelfGenerated => label.push_str(" + Reason"),
                    ReasoningSource::ExternalGenerated => label.push_str(" + ExtReason"),
                }
                label
            }
        }
    }

    /// Table row label, e.g. `5 Shot + DE + Reason`.
    pub fn label(&self) -> String {
        match self.kind {
            StrategyKind::FewShot => format!("{} Shot + {}", self.shots, self.family_label()),
            _ => self.family_label(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    /// `None` for reasoning-generation requests.
    pub strategy: Option<Strategy>,
    pub target_id: String,
    pub exemplar_ids: Vec<String>,
    pub template_version: String,
}

pub fn format_choices<S: AsRef<str>>(choices: &[S]) -> Result<String, PromptError> {
    if choices.is_empty() {
        return Err(PromptError::EmptyChoices);
    }
    Ok(choices
        .iter()
        .enumerate()
        .map(|(i, c)| format!("Option {}: {}", i + 1, c.as_ref()))
        .collect::<Vec<_>>()
        .join("\n"))
}

/// `two examples`, `one example`, `12 examples`.
pub fn example_count_phrase(n: usize) -> String {
    const WORDS: [&str; 10] = ["one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"];
    let count = match n {
        1..=10 => WORDS[n - 1].to_string(),
        _ => n.to_string(),
    };
    let noun = if n == 1 { "example" } else { "examples" };
    format!("{count} {noun}")
}

fn correct_choice_line(instance: &PuzzleInstance) -> String {
    format!("Option {}: {}", instance.label + 1, instance.correct_choice())
}

/// Renders the evaluation prompt for `instance`.
///
/// `exemplars` pairs each in-context example with its reasoning text; reasoning
/// must be present exactly when the strategy uses a reasoning source.
pub fn render_prompt(
    instance: &PuzzleInstance,
    strategy: &Strategy,
    exemplars: &[(&PuzzleInstance, Option<&str>)],
) -> Result<RenderedPrompt, PromptError> {
    strategy.validate()?;
    if exemplars.len() != strategy.shots {
        return Err(PromptError::ShotMismatch {
            expected: strategy.shots,
            found: exemplars.len(),
        });
    }
    for (ex, reasoning) in exemplars {
        if ex.subtask != instance.subtask {
            return Err(PromptError::SubtaskMismatch {
                exemplar: ex.id.clone(),
                expected: instance.subtask,
                found: ex.subtask,
            });
        }
        match (strategy.uses_reasoning(), reasoning) {
            (true, None) => return Err(PromptError::MissingReasoning(ex.id.clone())),
            (false, Some(_)) => return Err(PromptError::UnexpectedReasoning(ex.id.clone())),
            _ => {}
        }
    }

    let choices = format_choices(&instance.choices)?;
    let target_vars = [("question", instance.question.as_str()), ("choices", choices.as_str())];
    let text = match strategy.kind {
        StrategyKind::ZeroDirect => {
            let asset = match instance.subtask {
                Subtask::Sentence => template::ZERO_DIRECT_SENTENCE,
                Subtask::Word => template::ZERO_DIRECT_WORD,
            };
            template::fill(asset, &target_vars)?
        }
        StrategyKind::ZeroDefinition => {
            let asset = match instance.subtask {
                Subtask::Sentence => template::ZERO_DEFINITION_SENTENCE,
                Subtask::Word => template::ZERO_DEFINITION_WORD,
            };
            template::fill(asset, &target_vars)?
        }
        StrategyKind::FewShot => {
            let header = match instance.subtask {
                Subtask::Sentence => template::FEW_SHOT_HEADER_SENTENCE,
                Subtask::Word => template::FEW_SHOT_HEADER_WORD,
            };
            let count = example_count_phrase(strategy.shots);
            let mut parts = vec![template::fill(header, &[("example_count", count.as_str())])?];
            for (i, (ex, reasoning)) in exemplars.iter().enumerate() {
                let index = (i + 1).to_string();
                let ex_choices = format_choices(&ex.choices)?;
                let correct = correct_choice_line(ex);
                parts.push(template::fill(
                    template::FEW_SHOT_EXAMPLE,
                    &[
                        ("index", index.as_str()),
                        ("question", ex.question.as_str()),
                        ("choices", ex_choices.as_str()),
                        ("correct_choice", correct.as_str()),
                    ],
                )?);
                if let Some(reasoning) = reasoning {
                    parts.push(template::fill(template::FEW_SHOT_REASONING, &[("reasoning", reasoning)])?);
                }
            }
            parts.push(template::fill(template::FEW_SHOT_TARGET, &target_vars)?);
            parts.join("\n")
        }
    };

    Ok(RenderedPrompt {
        text,
        strategy: Some(*strategy),
        target_id: instance.id.clone(),
        exemplar_ids: exemplars.iter().map(|(ex, _)| ex.id.clone()).collect(),
        template_version: strategy.template_version().to_string(),
    })
}

/// Request asking a model to explain why the gold option is right and the distractors wrong.
pub fn render_reasoning_request(train_instance: &PuzzleInstance) -> Result<RenderedPrompt, PromptError> {
    let distractors = train_instance.distractor_list();
    if distractors.is_empty() {
        return Err(PromptError::MissingDistractor(train_instance.id.clone()));
    }
    let asset = match train_instance.subtask {
        Subtask::Sentence => template::REASONING_REQUEST_SENTENCE,
        Subtask::Word => template::REASONING_REQUEST_WORD,
    };
    let choices = format_choices(&train_instance.choices)?;
    let option_number = (train_instance.label + 1).to_string();
    let joined = distractors.join("; ");
    let text = template::fill(
        asset,
        &[
            ("question", train_instance.question.as_str()),
            ("choices", choices.as_str()),
            ("option_number", option_number.as_str()),
            ("correct_text", train_instance.correct_choice()),
            ("distractors", joined.as_str()),
        ],
    )?;
    Ok(RenderedPrompt {
        text,
        strategy: None,
        target_id: train_instance.id.clone(),
        exemplar_ids: Vec::new(),
        template_version: REASONING_REQUEST_TEMPLATE_VERSION.to_string(),
    })
}
