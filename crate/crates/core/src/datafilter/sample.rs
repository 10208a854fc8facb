use std::io::{BufRead, Write};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::PlausibleSet;
use crate::trajlog::{parse_action, read_jsonl, Action, LoadError, Step};

/// Where in its trajectory an example's step sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Initial,
    Final,
    Intermediate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    InDomain,
    OutOfDomain,
}

/// One `(intent, observation, previous action) -> action` example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingExample {
    pub intent: String,
    pub observation: String,
    pub prev_action: Option<Action>,
    pub target_action: Action,
    pub origin: Origin,
    pub source_task: String,
    pub domain: Domain,
}

impl TrainingExample {
    fn from_step(step: &Step, origin: Origin, task_id: &str) -> Self {
        Self {
            intent: step.intent.clone(),
            observation: step.observation.clone(),
            prev_action: step.prev_action.clone(),
            target_action: step.action.clone(),
            origin,
            source_task: task_id.to_string(),
            domain: Domain::InDomain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MixtureKind {
    A,
    B,
    C,
}

impl std::str::FromStr for MixtureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(MixtureKind::A),
            "B" | "b" => Ok(MixtureKind::B),
            "C" | "c" => Ok(MixtureKind::C),
            other => Err(format!("unknown mixture {other:?}, expected A, B or C")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingSet {
    pub examples: Vec<TrainingExample>,
    pub mixture: MixtureKind,
    pub seed: u64,
}

/// Samples initial, final and intermediate step examples in a 1:1:2 ratio.
///
/// Every initial step is kept. Final steps are sampled without replacement
/// up to the number of initial steps, intermediate steps up to twice that.
/// Single-step trajectories only contribute an initial example.
pub fn balanced_sample(p: &PlausibleSet, seed: u64) -> Vec<TrainingExample> {
    let mut initial = Vec::new();
    let mut finals = Vec::new();
    let mut interior = Vec::new();
    for t in p.trajectories() {
        let last = t.steps.len() - 1;
        initial.push(TrainingExample::from_step(&t.steps[0], Origin::Initial, &t.task_id));
        if last > 0 {
            finals.push(TrainingExample::from_step(&t.steps[last], Origin::Final, &t.task_id));
        }
        for step in t.steps.iter().take(last).skip(1) {
            interior.push(TrainingExample::from_step(step, Origin::Intermediate, &t.task_id));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = initial.len();
    let mut out = initial;
    out.extend(draw(&mut rng, finals, n));
    out.extend(draw(&mut rng, interior, 2 * n));
    out
}

fn draw(rng: &mut ChaCha8Rng, pool: Vec<TrainingExample>, amount: usize) -> Vec<TrainingExample> {
    let amount = amount.min(pool.len());
    let picked = index::sample(rng, pool.len(), amount);
    let mut pool: Vec<Option<TrainingExample>> = pool.into_iter().map(Some).collect();
    picked.into_iter().map(|i| pool[i].take().expect("indices are distinct")).collect()
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MixtureError {
    #[error("mixture {kind:?} needs a non-empty {which} set")]
    EmptyInput { kind: MixtureKind, which: &'static str },
    #[error("{which} set contains an example from the other domain (task {task})")]
    WrongDomain { which: &'static str, task: String },
}

/// Builds mixture A (in-domain), C (out-of-domain) or B (both, shuffled).
pub fn assemble_mixture(
    kind: MixtureKind,
    in_domain: &[TrainingExample],
    out_of_domain: &[TrainingExample],
    seed: u64,
) -> Result<TrainingSet, MixtureError> {
    check_domain(in_domain, Domain::InDomain, "in-domain")?;
    check_domain(out_of_domain, Domain::OutOfDomain, "out-of-domain")?;
    if matches!(kind, MixtureKind::A | MixtureKind::B) && in_domain.is_empty() {
        return Err(MixtureError::EmptyInput { kind, which: "in-domain" });
    }
    if matches!(kind, MixtureKind::B | MixtureKind::C) && out_of_domain.is_empty() {
        return Err(MixtureError::EmptyInput { kind, which: "out-of-domain" });
    }
    let examples = match kind {
        MixtureKind::A => in_domain.to_vec(),
        MixtureKind::C => out_of_domain.to_vec(),
        MixtureKind::B => {
            let mut all: Vec<_> = in_domain.iter().chain(out_of_domain).cloned().collect();
            all.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            all
        }
    };
    Ok(TrainingSet { examples, mixture: kind, seed })
}

fn check_domain(examples: &[TrainingExample], expected: Domain, which: &'static str) -> Result<(), MixtureError> {
    match examples.iter().find(|e| e.domain != expected) {
        Some(e) => Err(MixtureError::WrongDomain { which, task: e.source_task.clone() }),
        None => Ok(()),
    }
}

#[derive(Serialize, Deserialize)]
struct ExampleRecord {
    intent: String,
    observation: String,
    prev_action: Option<String>,
    target_action: String,
    origin: Origin,
    source_task: String,
    mixture: MixtureKind,
    domain: Domain,
    seed: u64,
}

pub fn write_training_set(mut sink: impl Write, set: &TrainingSet) -> std::io::Result<()> {
    for e in &set.examples {
        let record = ExampleRecord {
            intent: e.intent.clone(),
            observation: e.observation.clone(),
            prev_action: e.prev_action.as_ref().map(|a| a.raw().to_string()),
            target_action: e.target_action.raw().to_string(),
            origin: e.origin,
            source_task: e.source_task.clone(),
            mixture: set.mixture,
            domain: e.domain,
            seed: set.seed,
        };
        serde_json::to_writer(&mut sink, &record)?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads examples written by [`write_training_set`]. Mixture and seed
/// metadata are dropped.
pub fn read_training_set(source: impl BufRead) -> Result<Vec<TrainingExample>, LoadError> {
    Ok(read_jsonl::<ExampleRecord>(source)?
        .into_iter()
        .map(|(_, r)| TrainingExample {
            intent: r.intent,
            observation: r.observation,
            prev_action: r.prev_action.as_deref().map(parse_action),
            target_action: parse_action(&r.target_action),
            origin: r.origin,
            source_task: r.source_task,
            domain: r.domain,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datafilter::filter_plausible;
    use crate::trajlog::{build_trajectory, Terminal, Trajectory};

    fn traj(id: usize, len: usize) -> Trajectory {
        let steps = (0..len).map(|k| {
            let action = if k + 1 == len { Action::stop("42") } else { Action::click(k as u64) };
            (format!("obs {id}/{k}"), String::new(), action)
        });
        build_trajectory(id.to_string(), "intent", Terminal::Stopped, steps)
    }

    fn plausible(ts: Vec<Trajectory>) -> PlausibleSet {
        let (p, _) = filter_plausible(&ts);
        assert_eq!(p.len(), ts.len());
        p
    }

    fn count(ex: &[TrainingExample], origin: Origin) -> usize {
        ex.iter().filter(|e| e.origin == origin).count()
    }

    #[test]
    fn one_one_two_ratio() {
        let p = plausible((0..10).map(|i| traj(i, 4 + i % 3)).collect());
        let ex = balanced_sample(&p, 3);
        assert_eq!(ex.len(), 40);
        assert_eq!(count(&ex, Origin::Initial), 10);
        assert_eq!(count(&ex, Origin::Final), 10);
        assert_eq!(count(&ex, Origin::Intermediate), 20);
    }

    #[test]
    fn lone_stop_step_is_initial_only() {
        let p = plausible(vec![traj(0, 1)]);
        let ex = balanced_sample(&p, 0);
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].origin, Origin::Initial);
    }

    #[test]
    fn short_interior_pool_is_taken_whole() {
        let p = plausible((0..10).map(|i| traj(i, 3)).collect());
        let ex = balanced_sample(&p, 9);
        assert_eq!(count(&ex, Origin::Intermediate), 10);
        assert_eq!(ex.len(), 30);
    }

    #[test]
    fn origin_matches_step_position() {
        let p = plausible((0..6).map(|i| traj(i, 2 + i)).collect());
        for e in balanced_sample(&p, 1) {
            let t = p.trajectories().iter().find(|t| t.task_id == e.source_task).unwrap();
            let step = t.steps.iter().find(|s| s.observation == e.observation).unwrap();
            let expected = match step.index {
                0 => Origin::Initial,
                i if i + 1 == t.len() => Origin::Final,
                _ => Origin::Intermediate,
            };
            assert_eq!(e.origin, expected);
        }
    }

    #[test]
    fn seeded() {
        let p = plausible((0..20).map(|i| traj(i, 6)).collect());
        assert_eq!(balanced_sample(&p, 5), balanced_sample(&p, 5));
        assert_ne!(balanced_sample(&p, 5), balanced_sample(&p, 6));
    }

    fn ood(n: usize) -> Vec<TrainingExample> {
        let p = plausible((0..n).map(|i| traj(100 + i, 1)).collect());
        balanced_sample(&p, 0)
            .into_iter()
            .map(|mut e| {
                e.domain = Domain::OutOfDomain;
                e
            })
            .collect()
    }

    #[test]
    fn mixtures() {
        let p = plausible((0..10).map(|i| traj(i, 5)).collect());
        let ind = balanced_sample(&p, 0);
        let out = ood(40);

        let a = assemble_mixture(MixtureKind::A, &ind, &[], 1).unwrap();
        assert_eq!(a.examples.len(), 40);
        assert!(a.examples.iter().all(|e| e.domain == Domain::InDomain));

        let b = assemble_mixture(MixtureKind::B, &ind, &out, 1).unwrap();
        assert_eq!(b.examples.len(), 80);
        let key = |e: &TrainingExample| (e.source_task.clone(), e.observation.clone());
        let mut got: Vec<_> = b.examples.iter().map(key).collect();
        let mut want: Vec<_> = ind.iter().chain(&out).map(key).collect();
        got.sort();
        want.sort();
        assert_eq!(got, want);

        assert_eq!(
            assemble_mixture(MixtureKind::C, &ind, &[], 1),
            Err(MixtureError::EmptyInput { kind: MixtureKind::C, which: "out-of-domain" })
        );
        assert!(matches!(assemble_mixture(MixtureKind::A, &out, &[], 1), Err(MixtureError::WrongDomain { .. })));
    }

    #[test]
    fn export_round_trip() {
        let p = plausible((0..3).map(|i| traj(i, 4)).collect());
        let set = assemble_mixture(MixtureKind::A, &balanced_sample(&p, 2), &[], 2).unwrap();
        let mut buf = Vec::new();
        write_training_set(&mut buf, &set).unwrap();
        let first: serde_json::Value = serde_json::from_slice(buf.split(|b| *b == b'\n').next().unwrap()).unwrap();
        for field in
            ["intent", "observation", "prev_action", "target_action", "origin", "source_task", "mixture", "seed"]
        {
            assert!(first.get(field).is_some(), "missing {field}");
        }
        assert_eq!(read_training_set(buf.as_slice()).unwrap(), set.examples);
    }
}
