use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::http::{route_url, HttpError, JsonEndpoint};

/// Failure reported by an embedding backend.
#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    /// The provider could not be reached.
    #[error("{0}")]
    Transport(String),
    /// The provider answered, but not according to the wire contract.
    #[error("{0}")]
    Contract(String),
}

impl From<HttpError> for ProviderError {
    fn from(e: HttpError) -> Self {
        match e {
            // a server-side failure says nothing about the request
            HttpError::Transport { .. } => ProviderError::Transport(e.to_string()),
            HttpError::Status { status, .. } if status >= 500 => ProviderError::Transport(e.to_string()),
            HttpError::Status { .. } | HttpError::Decode { .. } => ProviderError::Contract(e.to_string()),
        }
    }
}

/// A text embedding backend.
pub trait EmbeddingProvider: Send + Sync {
    /// Model name and dimension, e.g. `all-mpnet-base-v2:768`. Part of every
    /// cache key.
    fn identity(&self) -> String;

    /// Largest batch the provider accepts in one request.
    fn max_batch(&self) -> usize;

    /// One vector per text, order-aligned.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    dim: usize,
    embeddings: Vec<Vec<f64>>,
}

/// Client for the `POST /embed` wire contract.
#[derive(Debug, Clone)]
pub struct HttpEmbeddingProvider {
    endpoint: JsonEndpoint,
    model: String,
    dim: usize,
    max_batch: usize,
}

impl HttpEmbeddingProvider {
    /// `endpoint` is the service base URL; `/embed` is appended unless present.
    pub fn new(endpoint: &str, model: impl Into<String>, dim: usize, max_batch: usize) -> Self {
        let endpoint = JsonEndpoint::new(route_url(endpoint, "embed"));
        Self { endpoint, model: model.into(), dim, max_batch: max_batch.max(1) }
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn identity(&self) -> String {
        format!("{}:{}", self.model, self.dim)
    }

    fn max_batch(&self) -> usize {
        self.max_batch
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let response: EmbedResponse = self.endpoint.post(&EmbedRequest { model: &self.model, texts })?;
        if response.dim != self.dim {
            return Err(ProviderError::Contract(format!(
                "provider reported dim {} but {} was configured",
                response.dim, self.dim
            )));
        }
        Ok(response.embeddings)
    }
}

/// Deterministic bag-of-words feature-hashing embedder.
///
/// Not a semantic model: texts sharing words get similar vectors and that
/// is all. Useful for offline smoke runs and fixtures.
#[derive(Debug, Clone)]
pub struct HashingProvider {
    dim: usize,
}

impl HashingProvider {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 2, "hashing embedder needs at least two buckets");
        Self { dim }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        // Constant feature so that no text maps to the zero vector.
        v[0] = 1.0;
        for token in text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase) {
            let digest = Sha256::digest(token.as_bytes());
            let bucket = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes")) as usize % (self.dim - 1) + 1;
            let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        v
    }
}

impl EmbeddingProvider for HashingProvider {
    fn identity(&self) -> String {
        format!("hashing-bow:{}", self.dim)
    }

    fn max_batch(&self) -> usize {
        usize::MAX
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashing_is_deterministic_and_unit() {
        let p = HashingProvider::new(64);
        let a = p.embed_one("Click the Submit button");
        assert_eq!(a, p.embed_one("click the submit BUTTON"));
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert_eq!(p.embed_one("")[0], 1.0);
    }
}
