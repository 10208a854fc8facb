use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{parse_action, Step, Terminal, Trajectory};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: task {task_id}: {reason}")]
    Validation { line: usize, task_id: String, reason: String },
    #[error("read failed: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize)]
struct StepRecord {
    intent: String,
    observation: String,
    prev_action: Option<String>,
    action: String,
    #[serde(default)]
    generation: String,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryRecord {
    task_id: String,
    terminal: Terminal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    success: Option<bool>,
    steps: Vec<StepRecord>,
}

/// Reads one JSON value per non-blank line. Errors carry 1-based line numbers.
pub fn read_jsonl<T: DeserializeOwned>(source: impl BufRead) -> Result<Vec<(usize, T)>, LoadError> {
    let mut out = Vec::new();
    for (n, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|source| LoadError::Parse { line: n + 1, source })?;
        out.push((n + 1, value));
    }
    Ok(out)
}

/// Loads a trajectory log, validating every step chain.
pub fn load_trajectories(source: impl BufRead) -> Result<Vec<Trajectory>, LoadError> {
    read_jsonl::<TrajectoryRecord>(source)?
        .into_iter()
        .map(|(line, record)| {
            let task_id = record.task_id.clone();
            let trajectory = from_record(record);
            trajectory.validate().map_err(|reason| LoadError::Validation { line, task_id, reason })?;
            Ok(trajectory)
        })
        .collect()
}

fn from_record(record: TrajectoryRecord) -> Trajectory {
    let mut steps = Vec::with_capacity(record.steps.len());
    let mut generations = Vec::with_capacity(record.steps.len());
    for (index, s) in record.steps.into_iter().enumerate() {
        steps.push(Step {
            intent: s.intent,
            observation: s.observation,
            prev_action: s.prev_action.as_deref().map(parse_action),
            action: parse_action(&s.action),
            index,
        });
        generations.push(s.generation);
    }
    Trajectory { task_id: record.task_id, steps, terminal: record.terminal, generations, success: record.success }
}

fn to_record(t: &Trajectory) -> TrajectoryRecord {
    TrajectoryRecord {
        task_id: t.task_id.clone(),
        terminal: t.terminal,
        success: t.success,
        steps: t
            .steps
            .iter()
            .enumerate()
            .map(|(k, s)| StepRecord {
                intent: s.intent.clone(),
                observation: s.observation.clone(),
                prev_action: s.prev_action.as_ref().map(|a| a.raw().to_string()),
                action: s.action.raw().to_string(),
                generation: t.generations.get(k).cloned().unwrap_or_default(),
            })
            .collect(),
    }
}

/// Writes trajectories in the log format, one record per line.
pub fn write_trajectories<'a>(
    mut sink: impl Write,
    trajectories: impl IntoIterator<Item = &'a Trajectory>,
) -> std::io::Result<()> {
    for t in trajectories {
        serde_json::to_writer(&mut sink, &to_record(t))?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajlog::ActionKind;

    const THREE_STEPS: &str = r#"{"task_id":"t1","terminal":"stopped","steps":[{"intent":"find it","observation":"page 0","prev_action":null,"action":"click [3]","generation":"g0"},{"intent":"find it","observation":"page 1","prev_action":"click [3]","action":"type [4] [abc] [1]","generation":"g1"},{"intent":"find it","observation":"page 2","prev_action":"type [4] [abc] [1]","action":"stop [42]","generation":"g2"}]}"#;

    #[test]
    fn empty_stream() {
        assert!(load_trajectories("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn three_step_record() {
        let ts = load_trajectories(THREE_STEPS.as_bytes()).unwrap();
        assert_eq!(ts.len(), 1);
        let t = &ts[0];
        assert_eq!(t.steps.len() - 1, 2);
        assert_eq!(t.steps[2].action.kind(), ActionKind::Stop);
        assert_eq!(t.generations, vec!["g0", "g1", "g2"]);
        assert_eq!(t.success, None);
    }

    #[test]
    fn broken_chain_names_task() {
        let bad = THREE_STEPS.replacen(r#""prev_action":"click [3]""#, r#""prev_action":"click [9]""#, 1);
        let err = load_trajectories(bad.as_bytes()).unwrap_err();
        match err {
            LoadError::Validation { task_id, line, .. } => {
                assert_eq!(task_id, "t1");
                assert_eq!(line, 1);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn malformed_json_names_line() {
        let input = format!("{THREE_STEPS}\n\n{{not json\n");
        let err = load_trajectories(input.as_bytes()).unwrap_err();
        assert!(matches!(err, LoadError::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn write_then_load_is_identity() {
        let ts = load_trajectories(THREE_STEPS.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &ts).unwrap();
        assert_eq!(load_trajectories(buf.as_slice()).unwrap(), ts);
    }
}
