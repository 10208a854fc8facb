//! Versioned prompt templates with `{name}` placeholders.

use std::collections::HashMap;

use thiserror::Error;

/// Bumped whenever any template text changes.
pub const PROMPT_VERSION: &str = "1";

pub const OBJECTIVE: &str = include_str!("../../assets/prompts/objective.txt");
pub const PLAN: &str = include_str!("../../assets/prompts/plan.txt");
pub const URL: &str = include_str!("../../assets/prompts/url.txt");
pub const ACTIONS: &str = include_str!("../../assets/prompts/actions.txt");
pub const OBSERVATION: &str = include_str!("../../assets/prompts/observation.txt");
pub const ACTION_SPACE: &str = include_str!("../../assets/prompts/action_space.txt");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("no value for placeholder {{{0}}}")]
    Missing(String),
    #[error("value {0:?} does not appear in the template")]
    Unused(String),
}

/// Splices values into `{name}` placeholders in one pass. Substituted text
/// is never rescanned, and every value must be used.
pub fn fill(template: &str, values: &[(&str, &str)]) -> Result<String, PromptError> {
    let lookup: HashMap<&str, &str> = values.iter().copied().collect();
    let mut used = vec![false; values.len()];
    let mut out = String::with_capacity(template.len() + values.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let name_len =
            after.find(|c: char| !(c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')).unwrap_or(after.len());
        if name_len > 0 && after[name_len..].starts_with('}') {
            let name = &after[..name_len];
            let value = lookup.get(name).ok_or_else(|| PromptError::Missing(name.to_string()))?;
            out.push_str(value);
            if let Some(k) = values.iter().position(|(n, _)| *n == name) {
                used[k] = true;
            }
            rest = &after[name_len + 1..];
        } else {
            out.push('{');
            rest = after;
        }
    }
    out.push_str(rest);
    if let Some(k) = used.iter().position(|u| !u) {
        return Err(PromptError::Unused(values[k].0.to_string()));
    }
    Ok(out)
}

/// Names of the placeholders a template expects, in order of first use.
pub fn placeholders(template: &str) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let name_len =
            after.find(|c: char| !(c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')).unwrap_or(after.len());
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_splicing() {
        let got = fill("A {x} B {y}{x}", &[("x", "{y}"), ("y", "1\n2")]).unwrap();
        assert_eq!(got, "A {y} B 1\n2{y}");
    }

    #[test]
    fn missing_and_unused() {
        assert_eq!(fill("{a}", &[]), Err(PromptError::Missing("a".into())));
        assert_eq!(fill("plain", &[("a", "1")]), Err(PromptError::Unused("a".into())));
        assert_eq!(fill("{ not a placeholder }", &[]).unwrap(), "{ not a placeholder }");
    }

    #[test]
    fn template_placeholders() {
        assert_eq!(placeholders(OBJECTIVE), ["examples"]);
        assert_eq!(placeholders(PLAN), ["objective", "url"]);
        assert_eq!(placeholders(URL), ["objective", "website", "steps", "step"]);
        let actions = placeholders(ACTIONS);
        assert!(actions.contains(&"current_step".to_string()));
        assert!(actions.contains(&"example_2_next_action".to_string()));
        let obs = placeholders(OBSERVATION);
        assert!(obs.contains(&"previous_action".to_string()) && obs.contains(&"next_action".to_string()));
    }

    #[test]
    fn envelope_example_is_intact() {
        assert!(ACTIONS.contains("In summary, the next action I will perform is ```click [1234]```"));
        assert!(OBSERVATION.contains("placed inside ``````."));
    }
}
