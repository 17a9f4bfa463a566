//! Named-placeholder templates.
//!
//! A placeholder is `{name}` with `name` made of lowercase ASCII letters and
//! underscores. Substitution is a single left-to-right pass, so substituted
//! values are never rescanned. Any other brace text is copied through.

use super::PromptError;

pub const ZERO_DEFINITION_SENTENCE: &str = include_str!("../../templates/zero_definition_sentence.txt");
pub const ZERO_DEFINITION_WORD: &str = include_str!("../../templates/zero_definition_word.txt");
pub const ZERO_DIRECT_SENTENCE: &str = include_str!("../../templates/zero_direct_sentence.txt");
pub const ZERO_DIRECT_WORD: &str = include_str!("../../templates/zero_direct_word.txt");
pub const FEW_SHOT_HEADER_SENTENCE: &str = include_str!("../../templates/few_shot_header_sentence.txt");
pub const FEW_SHOT_HEADER_WORD: &str = include_str!("../../templates/few_shot_header_word.txt");
pub const FEW_SHOT_EXAMPLE: &str = include_str!("../../templates/few_shot_example.txt");
pub const FEW_SHOT_REASONING: &str = include_str!("../../templates/few_shot_reasoning.txt");
pub const FEW_SHOT_TARGET: &str = include_str!("../../templates/few_shot_target.txt");
pub const REASONING_REQUEST_SENTENCE: &str = include_str!("../../templates/reasoning_request_sentence.txt");
pub const REASONING_REQUEST_WORD: &str = include_str!("../../templates/reasoning_request_word.txt");

/// Asset text without the single trailing newline the files end with.
pub fn body(asset: &str) -> &str {
    asset.strip_suffix('\n').unwrap_or(asset)
}

pub fn fill(template: &str, vars: &[(&str, &str)]) -> Result<String, PromptError> {
    let template = body(template);
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let name_len = after
            .find(|c: char| !(c.is_ascii_lowercase() || c == '_'))
            .unwrap_or(after.len());
        if name_len > 0 && after[name_len..].starts_with('}') {
            let name = &after[..name_len];
            let value = vars
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| PromptError::UnknownPlaceholder(name.to_string()))?;
            out.push_str(value);
            rest = &after[name_len + 1..];
        } else {
            out.push('{');
            rest = after;
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Placeholder names appearing in `template`, in order of first use.
pub fn placeholders(template: &str) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let name_len = after
            .find(|c: char| !(c.is_ascii_lowercase() || c == '_'))
            .unwrap_or(after.len());
        if name_len > 0 && after[name_len..].starts_with('}') {
            let name = after[..name_len].to_string();
            if !names.contains(&name) {
                names.push(name);
            }
        }
        rest = after;
    }
    names
}
