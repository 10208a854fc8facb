//! Dynamic time warping under cosine distance, exact and multiresolution.
//!
//! Both aligners share one dynamic program over a per-row column window.
//! Exact alignment uses the full window; FastDTW coarsens both sequences by
//! averaging adjacent pairs, aligns recursively, then projects the coarse
//! path back and refines inside a `radius` neighbourhood.

mod fast;

pub use fast::fastdtw_align;

use thiserror::Error;

use crate::embedder::{EmbeddedTrajectory, Vector};

#[derive(Debug, Error, PartialEq)]
pub enum AlignError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("cannot align an empty sequence")]
    Empty,
    #[error("zero vector at position {index} of the {side} sequence")]
    ZeroVector { side: &'static str, index: usize },
}

/// Order-preserving alignment of a reference (i) and a test (j) sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentPath {
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

impl AlignmentPath {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Checks the endpoint and monotone-step invariants for an `m x n` problem.
    pub fn is_valid_for(&self, m: usize, n: usize) -> bool {
        if self.pairs.first() != Some(&(0, 0)) || self.pairs.last() != Some(&(m - 1, n - 1)) {
            return false;
        }
        self.pairs.windows(2).all(|w| {
            let (di, dj) = (w[1].0 as isize - w[0].0 as isize, w[1].1 as isize - w[0].1 as isize);
            matches!((di, dj), (1, 1) | (1, 0) | (0, 1))
        })
    }
}

/// `1 - cos(u, v)`. Zero vectors have no direction and are rejected.
pub fn cosine_distance(u: &Vector, v: &Vector) -> Result<f64, AlignError> {
    if u.dim() != v.dim() {
        return Err(AlignError::DimMismatch(u.dim(), v.dim()));
    }
    let (su, sv) = (u.dot(u), v.dot(v));
    if su == 0.0 {
        return Err(AlignError::ZeroVector { side: "first", index: 0 });
    }
    if sv == 0.0 {
        return Err(AlignError::ZeroVector { side: "second", index: 0 });
    }
    Ok(from_cosine(u.dot(v), su, sv))
}

/// `1 - dot / (|u| |v|)` from squared norms. Taking one square root of the
/// product makes a vector's distance to itself exactly zero.
#[inline]
fn from_cosine(dot: f64, sq_u: f64, sq_v: f64) -> f64 {
    (1.0 - dot / (sq_u * sq_v).sqrt()).clamp(0.0, 2.0)
}

/// Exact DTW: the minimum-cost monotone path.
///
/// Ties are broken during backtracking in favour of the diagonal
/// predecessor, then the one that advanced `i`, then the one that advanced
/// `j`; identical sequences therefore align on the pure diagonal.
pub fn dtw_align(reference: &EmbeddedTrajectory, test: &EmbeddedTrajectory) -> Result<AlignmentPath, AlignError> {
    let (a, b) = (Sequence::of(reference, "reference")?, Sequence::of(test, "test")?);
    check_dims(&a, &b)?;
    Ok(align_in_window(&a, &b, &Window::full(a.len(), b.len()), DistanceMode::Strict))
}

pub(crate) fn check_dims(a: &Sequence, b: &Sequence) -> Result<(), AlignError> {
    if a.dim != b.dim {
        return Err(AlignError::DimMismatch(a.dim, b.dim));
    }
    Ok(())
}

/// Row-major vectors with their squared norms precomputed.
#[derive(Debug, Clone)]
pub(crate) struct Sequence {
    data: Vec<f64>,
    sq_norms: Vec<f64>,
    dim: usize,
}

impl Sequence {
    fn of(t: &EmbeddedTrajectory, side: &'static str) -> Result<Self, AlignError> {
        if t.is_empty() {
            return Err(AlignError::Empty);
        }
        let dim = t.dim();
        let mut data = Vec::with_capacity(t.len() * dim);
        let mut sq_norms = Vec::with_capacity(t.len());
        for (index, v) in t.vectors().iter().enumerate() {
            let sq = v.dot(v);
            if sq == 0.0 {
                return Err(AlignError::ZeroVector { side, index });
            }
            data.extend_from_slice(v.as_slice());
            sq_norms.push(sq);
        }
        Ok(Self { data, sq_norms, dim })
    }

    pub(crate) fn from_rows(rows: Vec<f64>, dim: usize) -> Self {
        let sq_norms = rows.chunks_exact(dim).map(|r| crate::embedder::vector_dot(r, r)).collect();
        Self { data: rows, sq_norms, dim }
    }

    pub(crate) fn len(&self) -> usize {
        self.sq_norms.len()
    }

    pub(crate) fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn dim(&self) -> usize {
        self.dim
    }

    fn distance(&self, i: usize, other: &Sequence, j: usize, mode: DistanceMode) -> f64 {
        let (si, sj) = (self.sq_norms[i], other.sq_norms[j]);
        if si == 0.0 || sj == 0.0 {
            // Only reachable on coarsened levels, where averaging opposite
            // vectors can cancel; treated as orthogonal.
            debug_assert_eq!(mode, DistanceMode::Coarse);
            return 1.0;
        }
        from_cosine(crate::embedder::vector_dot(self.row(i), other.row(j)), si, sj)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum DistanceMode {
    Strict,
    Coarse,
}

/// Inclusive column range `[lo, hi]` per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Window {
    rows: Vec<(usize, usize)>,
}

impl Window {
    pub(crate) fn full(m: usize, n: usize) -> Self {
        Self { rows: vec![(0, n - 1); m] }
    }

    pub(crate) fn from_rows(rows: Vec<(usize, usize)>) -> Self {
        Self { rows }
    }

    fn contains(&self, i: usize, j: usize) -> bool {
        let (lo, hi) = self.rows[i];
        lo <= j && j <= hi
    }
}

/// DTW restricted to `window`. The window must contain a monotone path
/// from `(0, 0)` to `(m-1, n-1)`.
pub(crate) fn align_in_window(a: &Sequence, b: &Sequence, window: &Window, mode: DistanceMode) -> AlignmentPath {
    let (m, n) = (a.len(), b.len());
    // Accumulated cost per row, stored only inside the window.
    let mut acc: Vec<Vec<f64>> = Vec::with_capacity(m);
    let at = |acc: &Vec<Vec<f64>>, i: usize, j: usize| -> f64 {
        if window.contains(i, j) {
            acc[i][j - window.rows[i].0]
        } else {
            f64::INFINITY
        }
    };

    for i in 0..m {
        let (lo, hi) = window.rows[i];
        let mut row = Vec::with_capacity(hi - lo + 1);
        for j in lo..=hi {
            let cost = a.distance(i, b, j, mode);
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 { at(&acc, i - 1, j - 1) } else { f64::INFINITY };
                let up = if i > 0 { at(&acc, i - 1, j) } else { f64::INFINITY };
                let left = if j > lo { row[j - lo - 1] } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            row.push(cost + best);
        }
        acc.push(row);
    }

    let total_cost = at(&acc, m - 1, n - 1);
    debug_assert!(total_cost.is_finite(), "window admits no path");

    let mut pairs = vec![(m - 1, n - 1)];
    let (mut i, mut j) = (m - 1, n - 1);
    while (i, j) != (0, 0) {
        let candidates =
            [(i > 0 && j > 0).then(|| (i - 1, j - 1)), (i > 0).then(|| (i - 1, j)), (j > 0).then(|| (i, j - 1))];
        let mut best: Option<((usize, usize), f64)> = None;
        for (pi, pj) in candidates.into_iter().flatten() {
            let v = at(&acc, pi, pj);
            // Strict comparison keeps the earlier candidate on ties.
            if best.is_none_or(|(_, b)| v < b) {
                best = Some(((pi, pj), v));
            }
        }
        (i, j) = best.expect("some predecessor exists").0;
        pairs.push((i, j));
    }
    pairs.reverse();
    AlignmentPath { pairs, total_cost }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(rows: &[&[f64]]) -> EmbeddedTrajectory {
        EmbeddedTrajectory::from_rows("t", rows)
    }

    #[test]
    fn cosine_cases() {
        let v = |c: &[f64]| Vector::new(c.to_vec()).unwrap();
        assert_eq!(cosine_distance(&v(&[1.0, 0.0]), &v(&[1.0, 0.0])).unwrap(), 0.0);
        assert_eq!(cosine_distance(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 1.0);
        let d = cosine_distance(&v(&[1.0, 1.0]), &v(&[1.0, 0.0])).unwrap();
        assert!((d - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-12);
        assert!((d - 0.29289).abs() < 1e-5);
        assert!(matches!(cosine_distance(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])), Err(AlignError::ZeroVector { .. })));
        assert_eq!(cosine_distance(&v(&[1.0]), &v(&[1.0, 0.0])), Err(AlignError::DimMismatch(1, 2)));
    }

    #[test]
    fn identical_sequences_align_diagonally() {
        let x = traj(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0], &[1.0, -1.0]]);
        let p = dtw_align(&x, &x).unwrap();
        assert_eq!(p.pairs, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        assert_eq!(p.total_cost, 0.0);
    }

    #[test]
    fn single_reference_step() {
        let r = traj(&[&[1.0, 0.0]]);
        let t = traj(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        assert_eq!(dtw_align(&r, &t).unwrap().pairs, vec![(0, 0), (0, 1), (0, 2)]);
    }

    #[test]
    fn two_by_two_tie_prefers_diagonal() {
        // Brute force: paths (0,0)(1,1) = 0+1, (0,0)(0,1)(1,1) = 0+0+1,
        // (0,0)(1,0)(1,1) = 0+1+1. Minimum 1, tie resolved to the diagonal.
        let r = traj(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let t = traj(&[&[1.0, 0.0], &[1.0, 0.0]]);
        let p = dtw_align(&r, &t).unwrap();
        assert_eq!(p.total_cost, 1.0);
        assert_eq!(p.pairs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn zero_vector_rejected() {
        let r = traj(&[&[1.0, 0.0], &[0.0, 0.0]]);
        assert_eq!(dtw_align(&r, &r), Err(AlignError::ZeroVector { side: "reference", index: 1 }));
    }

    #[test]
    fn dim_mismatch() {
        let r = traj(&[&[1.0, 0.0]]);
        let t = traj(&[&[1.0, 0.0, 0.0]]);
        assert_eq!(dtw_align(&r, &t), Err(AlignError::DimMismatch(2, 3)));
    }
}
