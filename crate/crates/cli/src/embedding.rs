use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use serde::Serialize;
use trajeval::embedder::{Embedder, EmbeddingCache, EmbeddingProvider, HashingProvider, HttpEmbeddingProvider};

use crate::files::Inputs;

/// Where vectors come from: a precomputed file, a live service, or both.
#[derive(Debug, Clone, Args, Serialize)]
pub struct EmbedOpts {
    /// Precomputed embedding file (cache JSONL)
    #[arg(long)]
    #[serde(skip)]
    pub embeddings: Option<PathBuf>,

    /// Embedding service base URL, or `hashing` for the built-in offline embedder
    #[arg(long)]
    pub embed_endpoint: Option<String>,

    /// Model name sent to the service and used in cache keys
    #[arg(long, default_value = "hashing-bow")]
    pub embed_model: String,

    #[arg(long, default_value_t = 256)]
    pub embed_dim: usize,

    /// Texts per embedding request
    #[arg(long, default_value_t = 32)]
    pub embed_batch: usize,
}

impl EmbedOpts {
    pub fn build(&self, inputs: &mut Inputs) -> Result<Embedder> {
        let cache = match &self.embeddings {
            Some(path) => EmbeddingCache::from_reader(inputs.read(path)?.as_slice())
                .map_err(|e| anyhow::anyhow!("embedder: {}: {e}", path.display()))?,
            None => EmbeddingCache::in_memory(),
        };
        let provider: Option<Box<dyn EmbeddingProvider>> = match self.embed_endpoint.as_deref() {
            None => None,
            Some("hashing") => {
                if self.embed_dim < 2 {
                    bail!("--embed-dim must be at least 2");
                }
                Some(Box::new(HashingProvider::new(self.embed_dim)))
            }
            Some(url) => {
                if self.embed_batch == 0 {
                    bail!("--embed-batch must be positive");
                }
                Some(Box::new(HttpEmbeddingProvider::new(url, &self.embed_model, self.embed_dim, self.embed_batch)))
            }
        };
        Ok(match provider {
            Some(p) => Embedder::new(p, cache),
            None => Embedder::offline(format!("{}:{}", self.embed_model, self.embed_dim), cache),
        })
    }
}
