//! Task-completion metrics: functional correctness, capability grouping of
//! intent templates, trivial-task detection and the capability score.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedder::Vector;
use crate::trajlog::TaskResult;

/// Similarity a template must exceed to join an existing capability.
pub const DEFAULT_CLUSTER_THRESHOLD: f64 = 0.60;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("no results")]
    Empty,
    #[error("duplicate result for task {0}")]
    DuplicateTask(String),
    #[error("task {0} belongs to no capability group")]
    Ungrouped(String),
    #[error("template {template} has dim {found}, expected {expected}")]
    DimMismatch { template: String, expected: usize, found: usize },
    #[error("template {0} has a zero embedding")]
    ZeroEmbedding(String),
    #[error("threshold {0} is outside (0, 1)")]
    BadThreshold(f64),
    #[error("result sets cover different tasks (first difference: {0})")]
    CoverageMismatch(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateEntry {
    pub template_id: String,
    pub template_text: String,
    pub task_ids: Vec<String>,
    pub embedding: Vector,
}

/// Manifest line for a template, before embedding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateRecord {
    pub template_id: String,
    pub template_text: String,
    pub task_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapabilityGroup {
    pub group_id: usize,
    pub members: Vec<TemplateEntry>,
}

impl CapabilityGroup {
    pub fn task_ids(&self) -> impl Iterator<Item = &str> {
        self.members.iter().flat_map(|m| m.task_ids.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrivialTaskSet {
    pub task_ids: HashSet<String>,
}

fn check_unique(results: &[TaskResult]) -> Result<(), MetricError> {
    let mut seen = HashSet::new();
    for r in results {
        if !seen.insert(r.task_id.as_str()) {
            return Err(MetricError::DuplicateTask(r.task_id.clone()));
        }
    }
    Ok(())
}

/// Fraction of tasks completed.
pub fn functional_correctness(results: &[TaskResult]) -> Result<f64, MetricError> {
    if results.is_empty() {
        return Err(MetricError::Empty);
    }
    check_unique(results)?;
    let completed = results.iter().filter(|r| r.completed).count();
    Ok(completed as f64 / results.len() as f64)
}

pub fn cosine_similarity(a: &Vector, b: &Vector) -> f64 {
    a.dot(b) / (a.norm() * b.norm())
}

/// Greedy single-pass grouping of templates.
///
/// Templates are visited in input order. Each joins the first group (in
/// creation order) holding a member with cosine similarity strictly above
/// `threshold`, or founds a new group. The result depends on input order.
pub fn cluster_templates(templates: &[TemplateEntry], threshold: f64) -> Result<Vec<CapabilityGroup>, MetricError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(MetricError::BadThreshold(threshold));
    }
    if let Some(first) = templates.first() {
        let expected = first.embedding.dim();
        for t in templates {
            if t.embedding.dim() != expected {
                return Err(MetricError::DimMismatch {
                    template: t.template_id.clone(),
                    expected,
                    found: t.embedding.dim(),
                });
            }
            if t.embedding.norm() == 0.0 {
                return Err(MetricError::ZeroEmbedding(t.template_id.clone()));
            }
        }
    }

    let mut groups: Vec<CapabilityGroup> = Vec::new();
    for t in templates {
        let home = groups
            .iter()
            .position(|g| g.members.iter().any(|m| cosine_similarity(&m.embedding, &t.embedding) > threshold));
        match home {
            Some(g) => groups[g].members.push(t.clone()),
            None => groups.push(CapabilityGroup { group_id: groups.len(), members: vec![t.clone()] }),
        }
    }
    Ok(groups)
}

/// Tasks the trivial agent completes.
pub fn detect_trivial(trivial_agent_results: &[TaskResult]) -> Result<TrivialTaskSet, MetricError> {
    check_unique(trivial_agent_results)?;
    Ok(TrivialTaskSet {
        task_ids: trivial_agent_results.iter().filter(|r| r.completed).map(|r| r.task_id.clone()).collect(),
    })
}

/// Task id to group id.
pub fn task_group_index(groups: &[CapabilityGroup]) -> HashMap<String, usize> {
    groups.iter().flat_map(|g| g.task_ids().map(move |t| (t.to_string(), g.group_id))).collect()
}

/// Ids of groups with at least one non-trivial completed task.
pub fn earned_groups(
    groups: &[CapabilityGroup],
    results: &[TaskResult],
    trivial: &TrivialTaskSet,
) -> Result<BTreeSet<usize>, MetricError> {
    check_unique(results)?;
    let index = task_group_index(groups);
    let mut earned = BTreeSet::new();
    for r in results {
        let g = index.get(&r.task_id).ok_or_else(|| MetricError::Ungrouped(r.task_id.clone()))?;
        if r.completed && !trivial.task_ids.contains(&r.task_id) {
            earned.insert(*g);
        }
    }
    Ok(earned)
}

/// Fraction of capability groups demonstrated by a non-trivial success.
pub fn capability_score(
    groups: &[CapabilityGroup],
    results: &[TaskResult],
    trivial: &TrivialTaskSet,
) -> Result<f64, MetricError> {
    if groups.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(earned_groups(groups, results, trivial)?.len() as f64 / groups.len() as f64)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CapabilityDiff {
    pub acquired: BTreeSet<usize>,
    pub lost: BTreeSet<usize>,
}

/// Groups earned under `b` but not `a` (acquired) and the reverse (lost).
pub fn capability_diff(
    groups: &[CapabilityGroup],
    results_a: &[TaskResult],
    results_b: &[TaskResult],
    trivial: &TrivialTaskSet,
) -> Result<CapabilityDiff, MetricError> {
    let tasks_a: BTreeSet<&str> = results_a.iter().map(|r| r.task_id.as_str()).collect();
    let tasks_b: BTreeSet<&str> = results_b.iter().map(|r| r.task_id.as_str()).collect();
    if let Some(t) = tasks_a.symmetric_difference(&tasks_b).next() {
        return Err(MetricError::CoverageMismatch(t.to_string()));
    }
    let a = earned_groups(groups, results_a, trivial)?;
    let b = earned_groups(groups, results_b, trivial)?;
    Ok(CapabilityDiff { acquired: b.difference(&a).copied().collect(), lost: a.difference(&b).copied().collect() })
}
