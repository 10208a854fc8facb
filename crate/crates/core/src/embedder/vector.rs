use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum VectorError {
    #[error("vector has no components")]
    Empty,
    #[error("component {0} is not finite")]
    NonFinite(usize),
}

/// Fixed-dimension embedding with finite components.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(components: Vec<f64>) -> Result<Self, VectorError> {
        if components.is_empty() {
            return Err(VectorError::Empty);
        }
        if let Some(i) = components.iter().position(|c| !c.is_finite()) {
            return Err(VectorError::NonFinite(i));
        }
        Ok(Self(components))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn squared_distance(&self, other: &Vector) -> f64 {
        squared_distance(&self.0, &other.0)
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = VectorError;

    fn try_from(value: Vec<f64>) -> Result<Self, Self::Error> {
        Vector::new(value)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four accumulators let the compiler vectorise the loop.
    let mut acc = [0.0f64; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let tail: f64 = chunks_a.remainder().iter().zip(chunks_b.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in chunks_a.zip(chunks_b) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let tail: f64 = chunks_a.remainder().iter().zip(chunks_b.remainder()).map(|(x, y)| (x - y) * (x - y)).sum();
    for (x, y) in chunks_a.zip(chunks_b) {
        for k in 0..4 {
            let d = x[k] - y[k];
            acc[k] += d * d;
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Embedded steps of one trajectory, all of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedTrajectory {
    pub task_id: String,
    vectors: Vec<Vector>,
}

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryShapeError {
    #[error("embedded trajectory {0} is empty")]
    Empty(String),
    #[error("embedded trajectory {task_id}: vector {index} has dim {found}, expected {expected}")]
    MixedDims { task_id: String, index: usize, expected: usize, found: usize },
}

impl EmbeddedTrajectory {
    pub fn new(task_id: impl Into<String>, vectors: Vec<Vector>) -> Result<Self, TrajectoryShapeError> {
        let task_id = task_id.into();
        let expected = match vectors.first() {
            Some(v) => v.dim(),
            None => return Err(TrajectoryShapeError::Empty(task_id)),
        };
        if let Some((index, v)) = vectors.iter().enumerate().find(|(_, v)| v.dim() != expected) {
            return Err(TrajectoryShapeError::MixedDims { task_id, index, expected, found: v.dim() });
        }
        Ok(Self { task_id, vectors })
    }

    /// Convenience constructor from raw rows; panics on malformed input.
    /// Intended for fixtures.
    pub fn from_rows(task_id: &str, rows: &[&[f64]]) -> Self {
        let vectors = rows.iter().map(|r| Vector::new(r.to_vec()).expect("finite row")).collect();
        Self::new(task_id, vectors).expect("well-formed rows")
    }

    pub fn vectors(&self) -> &[Vector] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_components() {
        assert_eq!(Vector::new(vec![]), Err(VectorError::Empty));
        assert_eq!(Vector::new(vec![1.0, f64::NAN]), Err(VectorError::NonFinite(1)));
    }

    #[test]
    fn unrolled_kernels_match_naive() {
        let a: Vec<f64> = (0..11).map(|i| i as f64 * 0.3 - 1.0).collect();
        let b: Vec<f64> = (0..11).map(|i| (i as f64).sin()).collect();
        let naive_dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let naive_sq: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
        assert!((dot(&a, &b) - naive_dot).abs() < 1e-12);
        assert!((squared_distance(&a, &b) - naive_sq).abs() < 1e-12);
    }

    #[test]
    fn mixed_dims_rejected() {
        let v = vec![Vector::new(vec![1.0]).unwrap(), Vector::new(vec![1.0, 2.0]).unwrap()];
        assert!(matches!(EmbeddedTrajectory::new("t", v), Err(TrajectoryShapeError::MixedDims { index: 1, .. })));
        assert_eq!(EmbeddedTrajectory::new("t", vec![]), Err(TrajectoryShapeError::Empty("t".into())));
    }
}
