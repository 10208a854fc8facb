use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::TaskScore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Uniform,
    ByCapability,
}

impl std::str::FromStr for Weighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Weighting::Uniform),
            "capability" | "by_capability" => Ok(Weighting::ByCapability),
            other => Err(format!("unknown weighting {other:?}, expected uniform or capability")),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AggregateOptions<'a> {
    pub exclude_trivial: bool,
    /// Task id to capability group; required for capability weighting.
    pub capability_groups: Option<&'a HashMap<String, usize>>,
    pub trivial_tasks: Option<&'a HashSet<String>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AggregateError {
    #[error("no task scores left to aggregate")]
    Empty,
    #[error("task {0} has no capability group")]
    Ungrouped(String),
    #[error("capability weighting needs a task-to-group mapping")]
    MissingGroups,
    #[error("excluding trivial tasks needs the trivial task set")]
    MissingTrivial,
}

/// Mean task score, either flat or as the mean of per-capability means,
/// optionally after dropping trivial tasks.
pub fn aggregate_scores(
    scores: &[TaskScore],
    weighting: Weighting,
    options: &AggregateOptions<'_>,
) -> Result<f64, AggregateError> {
    let kept: Vec<&TaskScore> = if options.exclude_trivial {
        let trivial = options.trivial_tasks.ok_or(AggregateError::MissingTrivial)?;
        scores.iter().filter(|s| !trivial.contains(&s.task_id)).collect()
    } else {
        scores.iter().collect()
    };
    if kept.is_empty() {
        return Err(AggregateError::Empty);
    }
    match weighting {
        Weighting::Uniform => Ok(kept.iter().map(|s| s.score).sum::<f64>() / kept.len() as f64),
        Weighting::ByCapability => {
            let groups = options.capability_groups.ok_or(AggregateError::MissingGroups)?;
            let mut per_group: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
            for s in kept {
                let g = groups.get(&s.task_id).ok_or_else(|| AggregateError::Ungrouped(s.task_id.clone()))?;
                let entry = per_group.entry(*g).or_default();
                entry.0 += s.score;
                entry.1 += 1;
            }
            let means: Vec<f64> = per_group.values().map(|(sum, n)| sum / *n as f64).collect();
            Ok(means.iter().sum::<f64>() / means.len() as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(id: &str, score: f64) -> TaskScore {
        TaskScore { task_id: id.into(), score, per_reference: vec![score], chosen_reference: 0, z_rand: vec![0.0] }
    }

    #[test]
    fn uniform_mean() {
        let s = [ts("a", 0.2), ts("b", 0.4)];
        let got = aggregate_scores(&s, Weighting::Uniform, &AggregateOptions::default()).unwrap();
        assert!((got - 0.3).abs() < 1e-12);
    }

    #[test]
    fn capability_mean_of_means() {
        let s = [ts("a1", 0.2), ts("a2", 0.4), ts("b1", 1.0)];
        let groups: HashMap<String, usize> = [("a1", 0), ("a2", 0), ("b1", 1)].map(|(k, g)| (k.to_string(), g)).into();
        let opts = AggregateOptions { capability_groups: Some(&groups), ..Default::default() };
        let got = aggregate_scores(&s, Weighting::ByCapability, &opts).unwrap();
        assert!((got - 0.65).abs() < 1e-12);
    }

    #[test]
    fn excluding_only_task_drops_group() {
        let s = [ts("a1", 0.2), ts("a2", 0.4), ts("b1", 1.0)];
        let groups: HashMap<String, usize> = [("a1", 0), ("a2", 0), ("b1", 1)].map(|(k, g)| (k.to_string(), g)).into();
        let trivial: HashSet<String> = ["b1".to_string()].into();
        let opts =
            AggregateOptions { exclude_trivial: true, capability_groups: Some(&groups), trivial_tasks: Some(&trivial) };
        let got = aggregate_scores(&s, Weighting::ByCapability, &opts).unwrap();
        assert!((got - 0.3).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let s = [ts("a", 0.2)];
        let trivial: HashSet<String> = ["a".to_string()].into();
        let opts = AggregateOptions { exclude_trivial: true, trivial_tasks: Some(&trivial), ..Default::default() };
        assert_eq!(aggregate_scores(&s, Weighting::Uniform, &opts), Err(AggregateError::Empty));
        assert_eq!(
            aggregate_scores(&s, Weighting::ByCapability, &AggregateOptions::default()),
            Err(AggregateError::MissingGroups)
        );
        let groups = HashMap::new();
        let opts = AggregateOptions { capability_groups: Some(&groups), ..Default::default() };
        assert_eq!(aggregate_scores(&s, Weighting::ByCapability, &opts), Err(AggregateError::Ungrouped("a".into())));
    }
}
