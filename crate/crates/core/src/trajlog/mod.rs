//! Trajectory data model, log ingestion and the action grammar.

mod action;
mod log;

pub use action::{parse_action, Action, ActionKind, Command, ScrollDirection};
pub use log::{load_trajectories, read_jsonl, write_trajectories, LoadError};

use serde::{Deserialize, Serialize};

/// How a trajectory ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Stopped,
    EnvError,
    StepLimit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub intent: String,
    pub observation: String,
    pub prev_action: Option<Action>,
    pub action: Action,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub task_id: String,
    pub steps: Vec<Step>,
    pub terminal: Terminal,
    /// Raw model output, one per step.
    pub generations: Vec<String>,
    pub success: Option<bool>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn intent(&self) -> &str {
        self.steps.first().map(|s| s.intent.as_str()).unwrap_or("")
    }

    pub fn final_step(&self) -> Option<&Step> {
        self.steps.last()
    }

    /// Checks the step-chain invariants, returning a description of the
    /// first violation.
    pub fn validate(&self) -> Result<(), String> {
        if self.steps.is_empty() {
            return Err("trajectory has no steps".into());
        }
        if self.generations.len() != self.steps.len() {
            return Err(format!("{} generations for {} steps", self.generations.len(), self.steps.len()));
        }
        for (t, step) in self.steps.iter().enumerate() {
            if step.index != t {
                return Err(format!("step at position {t} has index {}", step.index));
            }
            if t == 0 {
                if step.prev_action.is_some() {
                    return Err("step 0 has a previous action".into());
                }
                if step.observation.is_empty() {
                    return Err("step 0 has an empty observation".into());
                }
            } else if step.prev_action.as_ref() != Some(&self.steps[t - 1].action) {
                return Err(format!("step {t} previous action does not match the action of step {}", t - 1));
            }
        }
        if self.terminal == Terminal::Stopped {
            let last = &self.steps[self.steps.len() - 1];
            if last.action.kind() != ActionKind::Stop {
                return Err("terminal is stopped but the final action is not stop".into());
            }
        }
        Ok(())
    }
}

/// Builds a trajectory from (observation, generation, action) triples,
/// chaining previous actions and indices.
pub fn build_trajectory(
    task_id: impl Into<String>,
    intent: &str,
    terminal: Terminal,
    steps: impl IntoIterator<Item = (String, String, Action)>,
) -> Trajectory {
    let mut out = Vec::new();
    let mut generations = Vec::new();
    let mut prev: Option<Action> = None;
    for (index, (observation, generation, action)) in steps.into_iter().enumerate() {
        out.push(Step {
            intent: intent.to_string(),
            observation,
            prev_action: prev.clone(),
            action: action.clone(),
            index,
        });
        generations.push(generation);
        prev = Some(action);
    }
    Trajectory { task_id: task_id.into(), steps: out, terminal, generations, success: None }
}

/// The trajectory of the trivial agent, which stops immediately with `stop [N/A]`.
pub fn trivial_agent_trajectory(task_id: &str, intent: &str, initial_observation: &str) -> Trajectory {
    let stop = Action::stop("N/A");
    build_trajectory(task_id, intent, Terminal::Stopped, [(initial_observation.to_string(), stop.render(), stop)])
}

/// Binary completion record for one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub completed: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_agent_is_valid() {
        let t = trivial_agent_trajectory("7", "do it", "RootWebArea");
        assert!(t.validate().is_ok());
        assert_eq!(t.len(), 1);
        assert_eq!(t.steps[0].action.answer(), Some("N/A"));
    }

    #[test]
    fn stopped_requires_stop() {
        let t = build_trajectory("x", "i", Terminal::Stopped, [("o".to_string(), String::new(), Action::click(1))]);
        assert!(t.validate().unwrap_err().contains("not stop"));
    }
}
