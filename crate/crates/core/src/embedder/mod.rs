//! Step rendering and cached text embedding.

mod cache;
mod provider;
mod vector;

pub use cache::{content_key, EmbeddingCache};
pub use provider::{EmbeddingProvider, HashingProvider, HttpEmbeddingProvider, ProviderError};
pub(crate) use vector::{dot as vector_dot, squared_distance as vector_squared_distance};
pub use vector::{EmbeddedTrajectory, TrajectoryShapeError, Vector, VectorError};

use std::collections::HashMap;

use thiserror::Error;

use crate::trajlog::{Step, Trajectory};

/// Line separating the observation from the action in a rendered step.
pub const SEPARATOR: &str = "---";

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("text {index} is not cached and the provider is unavailable: {reason}")]
    Unavailable { index: usize, reason: String },
    #[error("provider contract violated: {0}")]
    Contract(String),
    #[error("cache file: {0}")]
    CacheFile(String),
    #[error("cannot embed an empty trajectory ({0})")]
    EmptyTrajectory(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Canonical embedding input for a step: the observation, a separator
/// line, then the rendered action. Intent and previous action are left out.
///
/// Observation lines made only of backslashes followed by `---` get one
/// more leading backslash, so the separator line is unambiguous.
pub fn render_step(step: &Step) -> String {
    format!("{}\n{SEPARATOR}\n{}", escape_observation(&step.observation), step.action.render())
}

fn escape_observation(observation: &str) -> String {
    observation
        .split('\n')
        .map(|line| if line.trim_start_matches('\\') == SEPARATOR { format!("\\{line}") } else { line.to_string() })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Splits a rendered step back into (observation, action text).
pub fn split_rendered(rendered: &str) -> Option<(String, String)> {
    let needle = format!("\n{SEPARATOR}\n");
    let at = rendered.find(&needle)?;
    let observation = rendered[..at]
        .split('\n')
        .map(|line| {
            if line.starts_with('\\') && line.trim_start_matches('\\') == SEPARATOR {
                line[1..].to_string()
            } else {
                line.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    Some((observation, rendered[at + needle.len()..].to_string()))
}

/// Embeds texts through a cache, calling the provider only for misses.
pub struct Embedder {
    provider: Option<Box<dyn EmbeddingProvider>>,
    identity: String,
    cache: EmbeddingCache,
}

impl Embedder {
    pub fn new(provider: Box<dyn EmbeddingProvider>, cache: EmbeddingCache) -> Self {
        let identity = provider.identity();
        Self { provider: Some(provider), identity, cache }
    }

    /// Cache-only embedder for precomputed embedding files.
    pub fn offline(identity: impl Into<String>, cache: EmbeddingCache) -> Self {
        Self { provider: None, identity: identity.into(), cache }
    }

    pub fn identity(&self) -> &str {
        &self.identity
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    pub fn key(&self, text: &str) -> String {
        content_key(&self.identity, text)
    }

    /// One vector per input text, order-aligned. Identical texts cost one
    /// provider slot.
    pub fn embed_texts<S: AsRef<str>>(&self, texts: &[S]) -> Result<Vec<Vector>, EmbedError> {
        let keys: Vec<String> = texts.iter().map(|t| self.key(t.as_ref())).collect();

        // First index of each distinct uncached text, in input order.
        let mut missing: Vec<usize> = Vec::new();
        let mut seen: HashMap<&str, ()> = HashMap::new();
        for (i, key) in keys.iter().enumerate() {
            if self.cache.get(key).is_none() && seen.insert(key.as_str(), ()).is_none() {
                missing.push(i);
            }
        }

        if !missing.is_empty() {
            let provider = self.provider.as_ref().ok_or_else(|| EmbedError::Unavailable {
                index: missing[0],
                reason: "no provider configured (offline mode)".into(),
            })?;
            let mut dim: Option<usize> = None;
            for chunk in missing.chunks(provider.max_batch()) {
                let batch: Vec<&str> = chunk.iter().map(|&i| texts[i].as_ref()).collect();
                let rows = provider.embed_batch(&batch).map_err(|e| match e {
                    ProviderError::Transport(reason) => EmbedError::Unavailable { index: chunk[0], reason },
                    ProviderError::Contract(msg) => EmbedError::Contract(msg),
                })?;
                if rows.len() != batch.len() {
                    return Err(EmbedError::Contract(format!(
                        "sent {} texts, received {} embeddings",
                        batch.len(),
                        rows.len()
                    )));
                }
                for (&i, row) in chunk.iter().zip(rows) {
                    let expected = *dim.get_or_insert(row.len());
                    if row.len() != expected {
                        return Err(EmbedError::Contract(format!(
                            "embedding for text {i} has dim {}, batch uses {expected}",
                            row.len()
                        )));
                    }
                    let v = Vector::new(row).map_err(|e| EmbedError::Contract(format!("text {i}: {e}")))?;
                    self.cache.insert(keys[i].clone(), v)?;
                }
            }
        }

        let vectors: Vec<Vector> = keys.iter().map(|k| self.cache.get(k).expect("every key cached above")).collect();
        if let Some(first) = vectors.first() {
            if let Some(i) = vectors.iter().position(|v| v.dim() != first.dim()) {
                return Err(EmbedError::Contract(format!(
                    "text {i} has dim {}, text 0 has dim {}",
                    vectors[i].dim(),
                    first.dim()
                )));
            }
        }
        Ok(vectors)
    }

    pub fn embed_trajectory(&self, t: &Trajectory) -> Result<EmbeddedTrajectory, EmbedError> {
        if t.steps.is_empty() {
            return Err(EmbedError::EmptyTrajectory(t.task_id.clone()));
        }
        let texts: Vec<String> = t.steps.iter().map(render_step).collect();
        let vectors = self.embed_texts(&texts)?;
        EmbeddedTrajectory::new(t.task_id.clone(), vectors).map_err(|e| EmbedError::Contract(e.to_string()))
    }
}
