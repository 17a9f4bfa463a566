//! Puzzle dataset ingestion.
//!
//! Splits are stored as JSON-Lines, one [`PuzzleInstance`] per line. Loading
//! validates every record and the split-level invariants (unique ids, at most
//! one instance per variant inside a reconstruction group). Unknown fields are
//! kept in [`PuzzleInstance::extra`] so a load/save cycle does not drop them.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subtask {
    Sentence,
    Word,
}

impl Subtask {
    pub const ALL: [Subtask; 2] = [Subtask::Sentence, Subtask::Word];

    pub fn as_str(self) -> &'static str {
        match self {
            Subtask::Sentence => "sentence",
            Subtask::Word => "word",
        }
    }
}

impl fmt::Display for Subtask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Subtask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sentence" => Ok(Subtask::Sentence),
            "word" => Ok(Subtask::Word),
            other => Err(format!("unknown subtask '{other}' (expected sentence or word)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRole {
    Train,
    Test,
}

impl SplitRole {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitRole::Train => "train",
            SplitRole::Test => "test",
        }
    }
}

impl fmt::Display for SplitRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(SplitRole::Train),
            "test" => Ok(SplitRole::Test),
            other => Err(format!("unknown split role '{other}' (expected train or test)")),
        }
    }
}

/// Which reconstruction of a puzzle an instance is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Original,
    Semantic,
    Context,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Original, Variant::Semantic, Variant::Context];
}

/// One multiple-choice brain teaser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PuzzleInstance {
    pub id: String,
    pub subtask: Subtask,
    pub question: String,
    pub choices: Vec<String>,
    /// 0-based index into `choices`.
    pub label: usize,
    pub variant: Variant,
    pub group_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distractors: Option<Vec<String>>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl PuzzleInstance {
    pub fn correct_choice(&self) -> &str {
        &self.choices[self.label]
    }

    /// Distractors, or an empty slice when the record carries none.
    pub fn distractor_list(&self) -> &[String] {
        self.distractors.as_deref().unwrap_or(&[])
    }

    fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.group_id.trim().is_empty() {
            return Err("empty group_id".into());
        }
        if self.choices.len() < 2 {
            return Err(format!("expected at least 2 choices, found {}", self.choices.len()));
        }
        let mut seen = HashSet::new();
        for choice in &self.choices {
            if !seen.insert(normalize_ws(choice)) {
                return Err(format!("duplicate choice '{choice}'"));
            }
        }
        if let Some(distractors) = &self.distractors {
            let correct = normalize_ws(&self.choices[self.label]);
            for d in distractors {
                let nd = normalize_ws(d);
                if !seen.contains(&nd) {
                    return Err(format!("distractor '{d}' is not among the choices"));
                }
                if nd == correct {
                    return Err(format!("distractor '{d}' is the correct choice"));
                }
            }
        }
        Ok(())
    }
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub subtask: Subtask,
    pub role: SplitRole,
    pub instances: Vec<PuzzleInstance>,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&PuzzleInstance> {
        self.instances.iter().find(|i| i.id == id)
    }

    /// Id -> instance lookup table.
    pub fn index(&self) -> BTreeMap<&str, &PuzzleInstance> {
        self.instances.iter().map(|i| (i.id.as_str(), i)).collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for instance in &self.instances {
            serde_json::to_writer(&mut out, instance)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut file = std::io::BufWriter::new(File::create(path)?);
        self.write_jsonl(&mut file)?;
        file.flush()
    }
}

/// The reconstructions of one puzzle present in a split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub group_id: String,
    pub by_variant: BTreeMap<Variant, String>,
}

impl Group {
    pub fn get(&self, variant: Variant) -> Option<&str> {
        self.by_variant.get(&variant).map(String::as_str)
    }

    pub fn is_complete(&self) -> bool {
        Variant::ALL.iter().all(|v| self.by_variant.contains_key(v))
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("label out of range for instance '{0}'")]
    LabelOutOfRange(String),
    #[error("duplicate instance id '{0}'")]
    DuplicateId(String),
    #[error("group '{0}' has two instances with the same variant")]
    VariantConflict(String),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Fill a missing `group_id` by stripping a variant suffix from `id`.
    pub group_from_id_suffix: bool,
}

const VARIANT_SUFFIXES: [&str; 4] = ["_SR", "_CR", "_semantic", "_context"];

/// `SP-12_SR` -> `SP-12`; ids without a known suffix are returned unchanged.
pub fn strip_variant_suffix(id: &str) -> &str {
    VARIANT_SUFFIXES
        .iter()
        .find_map(|suffix| id.strip_suffix(suffix).filter(|s| !s.is_empty()))
        .unwrap_or(id)
}

pub fn load_split(path: &Path, subtask: Subtask, role: SplitRole) -> Result<DatasetSplit, DatasetError> {
    load_split_with(path, subtask, role, LoadOptions::default())
}

pub fn load_split_with(
    path: &Path,
    subtask: Subtask,
    role: SplitRole,
    options: LoadOptions,
) -> Result<DatasetSplit, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_split(BufReader::new(file), subtask, role, options).map_err(|e| match e {
        DatasetError::Io { source, .. } => DatasetError::Io {
            path: path.display().to_string(),
            source,
        },
        other => other,
    })
}

pub fn read_split<R: BufRead>(
    reader: R,
    subtask: Subtask,
    role: SplitRole,
    options: LoadOptions,
) -> Result<DatasetSplit, DatasetError> {
    let mut instances = Vec::new();
    let mut ids = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| DatasetError::Io {
            path: String::new(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| DatasetError::MalformedRecord { line: line_no, reason };
        let mut value: Value = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| malformed("record is not a JSON object".into()))?;
        if !obj.contains_key("group_id") {
            if !options.group_from_id_suffix {
                return Err(malformed("missing field `group_id`".into()));
            }
            let id = obj
                .get("id")
                .and_then(Value::as_str)
                .ok_or_else(|| malformed("missing field `id`".into()))?;
            let group = strip_variant_suffix(id).to_string();
            obj.insert("group_id".into(), Value::String(group));
        }
        let instance: PuzzleInstance =
            serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
        if instance.subtask != subtask {
            return Err(malformed(format!(
                "subtask '{}' does not match requested '{}'",
                instance.subtask, subtask
            )));
        }
        if instance.label >= instance.choices.len() {
            return Err(DatasetError::LabelOutOfRange(instance.id));
        }
        instance.validate().map_err(malformed)?;
        if !ids.insert(instance.id.clone()) {
            return Err(DatasetError::DuplicateId(instance.id));
        }
        instances.push(instance);
    }
    let split = DatasetSplit { subtask, role, instances };
    derive_groups(&split)?;
    Ok(split)
}

/// One group per distinct `group_id`, ascending by `group_id`.
pub fn derive_groups(split: &DatasetSplit) -> Result<Vec<Group>, DatasetError> {
    let mut groups: BTreeMap<&str, BTreeMap<Variant, String>> = BTreeMap::new();
    for inst in &split.instances {
        let slot = groups.entry(inst.group_id.as_str()).or_default();
        if slot.insert(inst.variant, inst.id.clone()).is_some() {
            return Err(DatasetError::VariantConflict(inst.group_id.clone()));
        }
    }
    Ok(groups
        .into_iter()
        .map(|(group_id, by_variant)| Group {
            group_id: group_id.to_string(),
            by_variant,
        })
        .collect())
}
