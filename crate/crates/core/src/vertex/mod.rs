//! Alignment-based trajectory similarity against reference trajectories.
//!
//! A test trajectory is aligned to a reference with DTW. Each aligned pair
//! contributes its Gaussian-kernel similarity, scaled by
//! `1 / (1 + |i - j|)` and reduced by a per-reference baseline `z_rand`,
//! clamped to `[0, 1]`. The score is the mean over the path, and a task
//! scores the best of its references. The baseline is the same quantity
//! (uncorrected) for the trivial agent's one-step trajectory.

mod aggregate;

pub use aggregate::{aggregate_scores, AggregateError, AggregateOptions, Weighting};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dtw::{dtw_align, fastdtw_align, AlignError, AlignmentPath};
use crate::embedder::{vector_squared_distance, EmbeddedTrajectory, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Median pairwise Euclidean distance over the task's vectors.
    MedianHeuristic,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignMode {
    Exact,
    Fast { radius: usize },
}

/// Kernel bandwidth and aligner selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeSimilarityConfig {
    pub bandwidth: Bandwidth,
    pub align: AlignMode,
}

impl Default for NodeSimilarityConfig {
    fn default() -> Self {
        Self { bandwidth: Bandwidth::MedianHeuristic, align: AlignMode::Exact }
    }
}

impl NodeSimilarityConfig {
    pub fn fixed(sigma: f64) -> Self {
        Self { bandwidth: Bandwidth::Fixed(sigma), align: AlignMode::Exact }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error("bandwidth must be positive and finite, got {0}")]
    BadBandwidth(f64),
    #[error("no reference trajectories for task {0}")]
    NoReferences(String),
    #[error("empty sample set")]
    EmptySamples,
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
}

/// Per-task result: the best reference score and its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub task_id: String,
    pub score: f64,
    pub per_reference: Vec<f64>,
    pub chosen_reference: usize,
    pub z_rand: Vec<f64>,
}

/// Median of all pairwise Euclidean distances; 1 when that median is 0 or
/// there are fewer than two vectors.
pub fn median_heuristic<'a>(vectors: impl IntoIterator<Item = &'a Vector>) -> f64 {
    let vectors: Vec<&Vector> = vectors.into_iter().collect();
    let mut distances = Vec::with_capacity(vectors.len() * vectors.len().saturating_sub(1) / 2);
    for (k, a) in vectors.iter().enumerate() {
        for b in &vectors[k + 1..] {
            distances.push(a.squared_distance(b).sqrt());
        }
    }
    if distances.is_empty() {
        return 1.0;
    }
    distances.sort_by(f64::total_cmp);
    let mid = distances.len() / 2;
    let median = if distances.len() % 2 == 1 { distances[mid] } else { (distances[mid - 1] + distances[mid]) / 2.0 };
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

fn resolve_sigma<'a>(bandwidth: Bandwidth, vectors: impl IntoIterator<Item = &'a Vector>) -> Result<f64, ScoreError> {
    match bandwidth {
        Bandwidth::Fixed(sigma) if sigma > 0.0 && sigma.is_finite() => Ok(sigma),
        Bandwidth::Fixed(sigma) => Err(ScoreError::BadBandwidth(sigma)),
        Bandwidth::MedianHeuristic => Ok(median_heuristic(vectors)),
    }
}

#[inline]
fn gaussian(sq_dist: f64, sigma: f64) -> f64 {
    (-sq_dist / (2.0 * sigma * sigma)).exp()
}

/// Mean Gaussian kernel over all (reference, test) sample pairs.
///
/// With the median heuristic, the bandwidth comes from the union of both
/// sample sets.
pub fn node_similarity(
    ref_samples: &[Vector],
    test_samples: &[Vector],
    config: &NodeSimilarityConfig,
) -> Result<f64, ScoreError> {
    if ref_samples.is_empty() || test_samples.is_empty() {
        return Err(ScoreError::EmptySamples);
    }
    let dim = ref_samples[0].dim();
    if let Some(v) = ref_samples.iter().chain(test_samples).find(|v| v.dim() != dim) {
        return Err(ScoreError::DimMismatch(dim, v.dim()));
    }
    let sigma = resolve_sigma(config.bandwidth, ref_samples.iter().chain(test_samples))?;
    let mut sum = 0.0;
    for x in ref_samples {
        for y in test_samples {
            sum += gaussian(x.squared_distance(y), sigma);
        }
    }
    Ok(sum / (ref_samples.len() * test_samples.len()) as f64)
}

/// Linear distance decay `1 / (1 + |i - j|)`.
pub fn decay(i: usize, j: usize) -> f64 {
    1.0 / (1.0 + i.abs_diff(j) as f64)
}

fn align(
    reference: &EmbeddedTrajectory,
    test: &EmbeddedTrajectory,
    mode: AlignMode,
) -> Result<AlignmentPath, AlignError> {
    match mode {
        AlignMode::Exact => dtw_align(reference, test),
        AlignMode::Fast { radius } => fastdtw_align(reference, test, radius),
    }
}

/// Decayed kernel term of every aligned pair, in path order.
fn path_terms(
    reference: &EmbeddedTrajectory,
    test: &EmbeddedTrajectory,
    sigma: f64,
    mode: AlignMode,
) -> Result<Vec<f64>, ScoreError> {
    let path = align(reference, test, mode)?;
    let (rv, tv) = (reference.vectors(), test.vectors());
    Ok(path
        .pairs
        .iter()
        .map(|&(i, j)| decay(i, j) * gaussian(vector_squared_distance(rv[i].as_slice(), tv[j].as_slice()), sigma))
        .collect())
}

fn corrected_mean(terms: &[f64], z_rand: f64) -> f64 {
    terms.iter().map(|t| (t - z_rand).clamp(0.0, 1.0)).sum::<f64>() / terms.len() as f64
}

/// Score of one test trajectory against one reference, in `[0, 1]`.
pub fn vertex_dtw_single(
    reference: &EmbeddedTrajectory,
    test: &EmbeddedTrajectory,
    z_rand: f64,
    config: &NodeSimilarityConfig,
) -> Result<f64, ScoreError> {
    let sigma = resolve_sigma(config.bandwidth, reference.vectors().iter().chain(test.vectors()))?;
    Ok(corrected_mean(&path_terms(reference, test, sigma, config.align)?, z_rand))
}

/// Baseline correction: the uncorrected mean path term between a reference
/// and the trivial agent's trajectory.
///
/// With the median heuristic the bandwidth is taken over the reference and
/// baseline vectors; [`score_task`] instead reuses the task's bandwidth.
pub fn compute_z_rand(
    reference: &EmbeddedTrajectory,
    baseline: &EmbeddedTrajectory,
    config: &NodeSimilarityConfig,
) -> Result<f64, ScoreError> {
    let sigma = resolve_sigma(config.bandwidth, reference.vectors().iter().chain(baseline.vectors()))?;
    z_rand_with_sigma(reference, baseline, sigma, config.align)
}

fn z_rand_with_sigma(
    reference: &EmbeddedTrajectory,
    baseline: &EmbeddedTrajectory,
    sigma: f64,
    mode: AlignMode,
) -> Result<f64, ScoreError> {
    let terms = path_terms(reference, baseline, sigma, mode)?;
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}

/// Scores `test` against every reference and keeps the maximum (lowest
/// index on ties).
///
/// One bandwidth serves the whole task: with the median heuristic it is
/// computed over all reference and test vectors, and reused for the
/// baseline terms.
pub fn score_task(
    refs: &[EmbeddedTrajectory],
    test: &EmbeddedTrajectory,
    baseline: &EmbeddedTrajectory,
    config: &NodeSimilarityConfig,
) -> Result<TaskScore, ScoreError> {
    if refs.is_empty() {
        return Err(ScoreError::NoReferences(test.task_id.clone()));
    }
    let sigma = resolve_sigma(config.bandwidth, refs.iter().flat_map(|r| r.vectors()).chain(test.vectors()))?;
    let mut per_reference = Vec::with_capacity(refs.len());
    let mut z_rand = Vec::with_capacity(refs.len());
    for r in refs {
        let z = z_rand_with_sigma(r, baseline, sigma, config.align)?;
        per_reference.push(corrected_mean(&path_terms(r, test, sigma, config.align)?, z));
        z_rand.push(z);
    }
    let (chosen_reference, score) = per_reference
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, s)| if s > best.1 { (k, s) } else { best });
    Ok(TaskScore { task_id: test.task_id.clone(), score, per_reference, chosen_reference, z_rand })
}
