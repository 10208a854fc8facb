//! Response parsers for each generation stage.

use std::sync::LazyLock;

use regex::Regex;

use crate::trajlog::{parse_action, Action};

static LIST_MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(?:\d+[.)]|[-*•])\s+").expect("valid regex"));

const NEXT_ACTION_LEAD: &str = "In summary, the next action I will perform is";

/// Extracts `(objective, hostname)` from an `OBJECTIVE:` / `URL:` answer.
pub(crate) fn objective(text: &str) -> Result<(String, String), String> {
    let intent = labelled_line(text, "OBJECTIVE:").ok_or("missing OBJECTIVE: line")?;
    let url = labelled_line(text, "URL:").ok_or("missing URL: line")?;
    if intent.is_empty() {
        return Err("empty objective".into());
    }
    Ok((intent, hostname(&url)?))
}

fn labelled_line(text: &str, label: &str) -> Option<String> {
    text.lines().map(str::trim).find_map(|l| l.strip_prefix(label)).map(|rest| rest.trim().to_string())
}

/// Normalises a URL answer to a bare hostname.
pub(crate) fn hostname(raw: &str) -> Result<String, String> {
    let host = raw.trim();
    let host =
        host.strip_prefix("https://").or_else(|| host.strip_prefix("http://")).unwrap_or(host).trim_end_matches('/');
    if host.is_empty() || host.contains('/') || host.contains(char::is_whitespace) || !host.contains('.') {
        return Err(format!("{raw:?} is not a bare hostname"));
    }
    Ok(host.to_string())
}

/// One plan step per non-empty line, with stray list markers removed.
pub(crate) fn plan(text: &str) -> Result<Vec<String>, String> {
    let steps: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| LIST_MARKER.replace(l, "").trim().to_string())
        .filter(|l| !l.is_empty())
        .collect();
    if steps.is_empty() {
        return Err("plan has no steps".into());
    }
    Ok(steps)
}

/// The first line of the answer, which must be a single token.
pub(crate) fn page_url(text: &str) -> Result<String, String> {
    let line = text.lines().map(str::trim).find(|l| !l.is_empty()).ok_or("empty URL answer")?;
    if line.contains(char::is_whitespace) {
        return Err(format!("{line:?} is not a URL"));
    }
    Ok(line.to_string())
}

/// Splits `LABEL:` sections. Labels must start a line; a section runs to
/// the next recognised label.
pub(crate) fn sections<'a>(text: &'a str, labels: &[&'static str]) -> Vec<(&'static str, &'a str)> {
    let mut marks: Vec<(usize, usize, &'static str)> = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_start();
        let indent = line.len() - trimmed.len();
        if let Some(label) = labels.iter().find(|l| trimmed.starts_with(**l)) {
            marks.push((offset, offset + indent + label.len(), label));
        }
        offset += line.len();
    }
    marks
        .iter()
        .enumerate()
        .map(|(k, &(_, body_start, label))| {
            let end = marks.get(k + 1).map(|m| m.0).unwrap_or(text.len());
            (label, text[body_start..end].trim())
        })
        .collect()
}

fn section<'a>(found: &[(&'static str, &'a str)], label: &str) -> Option<&'a str> {
    found.iter().find(|(l, _)| *l == label).map(|(_, body)| *body)
}

/// The action inside the ```...``` envelope that follows the summary lead.
pub(crate) fn enveloped_action(text: &str) -> Result<Action, String> {
    let at = text.find(NEXT_ACTION_LEAD).ok_or("next action lacks the summary envelope")?;
    let rest = &text[at + NEXT_ACTION_LEAD.len()..];
    let open = rest.find("```").ok_or("next action lacks an opening ```")?;
    let body = &rest[open + 3..];
    let close = body.find("```").ok_or("next action lacks a closing ```")?;
    let action = parse_action(body[..close].trim());
    if action.is_invalid() {
        return Err(format!("next action {:?} is not a valid action", action.raw()));
    }
    Ok(action)
}

fn previous_action(text: &str) -> Result<Option<Action>, String> {
    let text = text.trim();
    let inner = match text.find("```") {
        Some(open) => {
            let body = &text[open + 3..];
            let close = body.find("```").ok_or("previous action has an unclosed ```")?;
            body[..close].trim()
        }
        None => text,
    };
    if inner.is_empty() || ["none", "null", "n/a"].contains(&inner.to_ascii_lowercase().as_str()) {
        return Ok(None);
    }
    let action = parse_action(inner);
    if action.is_invalid() {
        return Err(format!("previous action {inner:?} is not a valid action"));
    }
    Ok(Some(action))
}

/// `(previous, next)` actions from a WEBPAGE:/PREVIOUS ACTION:/NEXT ACTION: answer.
pub(crate) fn actions(text: &str) -> Result<(Option<Action>, Action), String> {
    let found = sections(text, &["WEBPAGE:", "PREVIOUS ACTION:", "NEXT ACTION:"]);
    let prev = section(&found, "PREVIOUS ACTION:").ok_or("missing PREVIOUS ACTION: section")?;
    let next = section(&found, "NEXT ACTION:").ok_or("missing NEXT ACTION: section")?;
    Ok((previous_action(prev)?, enveloped_action(next)?))
}

/// The accessibility tree from a WEBPAGE: answer.
pub(crate) fn webpage(text: &str) -> Result<String, String> {
    let found = sections(text, &["WEBPAGE:", "PREVIOUS ACTION:", "NEXT ACTION:"]);
    match section(&found, "WEBPAGE:") {
        Some(body) if !body.is_empty() => Ok(body.to_string()),
        Some(_) => Err("WEBPAGE: section is empty".into()),
        None => Err("missing WEBPAGE: section".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajlog::ActionKind;

    #[test]
    fn objective_answer() {
        let (i, u) = objective("OBJECTIVE: Find the cheapest flight\nURL: https://www.kayak.com/\n").unwrap();
        assert_eq!(i, "Find the cheapest flight");
        assert_eq!(u, "www.kayak.com");
        assert!(objective("OBJECTIVE: x\nURL: kayak.com/flights").is_err());
        assert!(objective("just text").is_err());
    }

    #[test]
    fn plan_lines() {
        assert_eq!(plan("Click search\n\n2. Type query\n- Stop\n").unwrap(), ["Click search", "Type query", "Stop"]);
        assert!(plan("  \n").is_err());
    }

    #[test]
    fn action_sections() {
        let text = "WEBPAGE: [1] RootWebArea 'Shop'\n  [5] button 'Go'\nPREVIOUS ACTION: None\nNEXT ACTION: Let's think step-by-step. The button is 5. In summary, the next action I will perform is ```click [5]```";
        let (prev, next) = actions(text).unwrap();
        assert_eq!(prev, None);
        assert_eq!(next.kind(), ActionKind::Click);
        assert_eq!(webpage(text).unwrap(), "[1] RootWebArea 'Shop'\n  [5] button 'Go'");

        let prev_text = "PREVIOUS ACTION: ```type [3] [shoes] [1]```\nNEXT ACTION: In summary, the next action I will perform is ```stop [12]```";
        let (prev, next) = actions(prev_text).unwrap();
        assert_eq!(prev.unwrap().text_arg(), Some("shoes"));
        assert_eq!(next.answer(), Some("12"));
    }

    #[test]
    fn envelope_required() {
        let err = actions("PREVIOUS ACTION: None\nNEXT ACTION: click [5]").unwrap_err();
        assert!(err.contains("envelope"));
        assert!(actions(
            "PREVIOUS ACTION: None\nNEXT ACTION: In summary, the next action I will perform is ```clik 5```"
        )
        .is_err());
    }
}
