//! Turning a raw completion into a 1-based option number.
//!
//! Rules, first match wins:
//! 1. `Option {k}` mentions (case-insensitive, word-bounded) that all name the same k.
//! 2. The whole trimmed reply is a bare integer.
//! 3. Exactly one choice text appears verbatim, comparing lowercase text with
//!    punctuation removed; overlapping matches keep the longest choice.
//!
//! Anything else is `ambiguous` when a rule saw competing candidates and
//! `unparseable` otherwise. A number past the last choice is `out_of_range`.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Parsed,
    Ambiguous,
    OutOfRange,
    Unparseable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub instance_id: String,
    /// 1-based option number; present only when `parse_status` is `parsed`.
    pub predicted: Option<usize>,
    pub raw_text: String,
    pub parse_status: ParseStatus,
}

impl Prediction {
    pub fn is_parsed(&self) -> bool {
        self.parse_status == ParseStatus::Parsed
    }

    /// Correct against a 0-based gold label.
    pub fn is_correct(&self, label: usize) -> bool {
        self.is_parsed() && self.predicted == Some(label + 1)
    }
}

static OPTION_MENTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\boption\s*(\d+)\b").unwrap());
static BARE_NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(\d+)\.?$").unwrap());

enum Rule {
    Hit(usize),
    OutOfRange,
    Competing,
    Nothing,
}

fn check_range(k: usize, n: usize) -> Rule {
    if (1..=n).contains(&k) {
        Rule::Hit(k)
    } else {
        Rule::OutOfRange
    }
}

fn option_mentions(text: &str, n: usize) -> Rule {
    let ks: BTreeSet<usize> = OPTION_MENTION
        .captures_iter(text)
        .map(|c| c[1].parse::<usize>().unwrap_or(usize::MAX))
        .collect();
    match ks.len() {
        0 => Rule::Nothing,
        1 => check_range(*ks.first().unwrap(), n),
        _ => Rule::Competing,
    }
}

fn bare_number(text: &str, n: usize) -> Rule {
    match BARE_NUMBER.captures(text.trim()) {
        Some(c) => check_range(c[1].parse::<usize>().unwrap_or(usize::MAX), n),
        None => Rule::Nothing,
    }
}

/// Lowercase, punctuation to spaces, single-spaced, padded with one space each side.
fn normalize(text: &str) -> String {
    let mapped: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    let mut out = String::from(" ");
    for word in mapped.split_whitespace() {
        out.push_str(word);
        out.push(' ');
    }
    out
}

fn verbatim_choice<S: AsRef<str>>(text: &str, choices: &[S]) -> Rule {
    let haystack = normalize(text);
    // (start, end, choice index) of every word-bounded occurrence
    let mut spans = Vec::new();
    for (idx, choice) in choices.iter().enumerate() {
        let needle = normalize(choice.as_ref());
        if needle.trim().is_empty() {
            continue;
        }
        let mut from = 0;
        while let Some(pos) = haystack[from..].find(&needle) {
            let start = from + pos;
            spans.push((start, start + needle.len(), idx));
            from = start + 1;
        }
    }
    spans.sort_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)));
    let mut kept: Vec<(usize, usize, usize)> = Vec::new();
    for span in spans {
        // shared boundary spaces do not count as overlap
        if kept.iter().all(|k| span.1 <= k.0 + 1 || span.0 + 1 >= k.1) {
            kept.push(span);
        }
    }
    let matched: BTreeSet<usize> = kept.iter().map(|k| k.2).collect();
    match matched.len() {
        0 => Rule::Nothing,
        1 => Rule::Hit(matched.first().unwrap() + 1),
        _ => Rule::Competing,
    }
}

pub fn extract_choice<S: AsRef<str>>(instance_id: &str, raw_text: &str, choices: &[S]) -> Prediction {
    let n = choices.len();
    let mut competing = false;
    let mut outcome = None;
    for rule in [
        option_mentions(raw_text, n),
        bare_number(raw_text, n),
        verbatim_choice(raw_text, choices),
    ] {
        match rule {
            Rule::Hit(k) => {
                outcome = Some((Some(k), ParseStatus::Parsed));
                break;
            }
            Rule::OutOfRange => {
                outcome = Some((None, ParseStatus::OutOfRange));
                break;
            }
            Rule::Competing => competing = true,
            Rule::Nothing => {}
        }
    }
    let (predicted, parse_status) = outcome.unwrap_or(if competing {
        (None, ParseStatus::Ambiguous)
    } else {
        (None, ParseStatus::Unparseable)
    });
    Prediction {
        instance_id: instance_id.to_string(),
        predicted,
        raw_text: raw_text.to_string(),
        parse_status,
    }
}
