use std::collections::{BTreeMap, HashMap};
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajlog::{Terminal, Trajectory};

static SELF_CRITIQUE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(impossible|cannot)\b").expect("valid regex"));
static NO_PREFIX: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^no\b").expect("valid regex"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterStatus {
    Plausible,
    SelfCritique,
    Refusal,
    EnvError,
    Unparsable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterVerdict {
    pub status: FilterStatus,
    /// Empty for plausible trajectories.
    pub detail: String,
}

impl FilterVerdict {
    fn plausible() -> Self {
        Self { status: FilterStatus::Plausible, detail: String::new() }
    }

    fn rejected(status: FilterStatus, detail: String) -> Self {
        Self { status, detail }
    }

    pub fn is_plausible(&self) -> bool {
        self.status == FilterStatus::Plausible
    }
}

/// Classifies one trajectory. Precedence when several predicates fire:
/// env error, then unparsable, then self-critique, then refusal.
pub fn classify_trajectory(t: &Trajectory) -> FilterVerdict {
    if t.terminal == Terminal::EnvError {
        return FilterVerdict::rejected(FilterStatus::EnvError, "environment reported an error".into());
    }
    if let Some(step) = t.steps.iter().find(|s| s.action.is_invalid()) {
        return FilterVerdict::rejected(
            FilterStatus::Unparsable,
            format!("step {} action {:?} is unparsable", step.index, step.action.raw()),
        );
    }
    for (k, generation) in t.generations.iter().enumerate() {
        if let Some(m) = SELF_CRITIQUE.find(generation) {
            return FilterVerdict::rejected(
                FilterStatus::SelfCritique,
                format!("generation {k} contains {:?}", m.as_str()),
            );
        }
    }
    if let Some(answer) = t.final_step().and_then(|s| s.action.answer()) {
        if is_refusal(answer) {
            return FilterVerdict::rejected(FilterStatus::Refusal, format!("final answer {answer:?}"));
        }
    }
    FilterVerdict::plausible()
}

fn is_refusal(answer: &str) -> bool {
    let answer = answer.trim();
    answer.is_empty() || answer.eq_ignore_ascii_case("n/a") || NO_PREFIX.is_match(answer)
}

/// Trajectories that passed every filter, in input order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PlausibleSet {
    trajectories: Vec<Trajectory>,
}

impl PlausibleSet {
    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn into_inner(self) -> Vec<Trajectory> {
        self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

pub type StatusCounts = BTreeMap<FilterStatus, usize>;

/// Keeps the plausible trajectories and tallies every verdict.
pub fn filter_plausible(ts: &[Trajectory]) -> (PlausibleSet, StatusCounts) {
    let verdicts: Vec<FilterVerdict> = ts.par_iter().map(classify_trajectory).collect();
    let mut counts = StatusCounts::new();
    let mut kept = Vec::new();
    for (t, v) in ts.iter().zip(&verdicts) {
        *counts.entry(v.status).or_default() += 1;
        if v.is_plausible() {
            kept.push(t.clone());
        }
    }
    (PlausibleSet { trajectories: kept }, counts)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MergeError {
    #[error("task {0} has no fallback trajectory")]
    MissingFallback(String),
}

/// Per task, prefers the primary trajectory when plausible, else the
/// fallback when plausible, else drops the task.
pub fn merge_with_fallback(primary: &[Trajectory], fallback: &[Trajectory]) -> Result<Vec<Trajectory>, MergeError> {
    let mut by_task: HashMap<&str, &Trajectory> = HashMap::new();
    for t in fallback {
        by_task.entry(t.task_id.as_str()).or_insert(t);
    }
    let mut out = Vec::new();
    for t in primary {
        let fb = by_task.get(t.task_id.as_str()).ok_or_else(|| MergeError::MissingFallback(t.task_id.clone()))?;
        if classify_trajectory(t).is_plausible() {
            out.push(t.clone());
        } else if classify_trajectory(fb).is_plausible() {
            out.push((*fb).clone());
        }
    }
    Ok(out)
}
