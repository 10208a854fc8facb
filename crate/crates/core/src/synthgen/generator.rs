use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::{route_url, HttpError, JsonEndpoint};

/// Sampling settings passed to the text generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    /// Attempts per objective (diversity gate) and per example.
    pub max_retries: usize,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self { temperature: 1.0, top_p: 1.0, max_retries: 10 }
    }
}

#[derive(Debug, Error)]
#[error("text generation failed: {0}")]
pub struct GenError(pub String);

impl From<HttpError> for GenError {
    fn from(e: HttpError) -> Self {
        GenError(e.to_string())
    }
}

pub trait TextGenerator: Send + Sync {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, GenError>;
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    prompt: &'a str,
    temperature: f64,
    top_p: f64,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

/// Client for the `POST /generate` wire contract.
#[derive(Debug, Clone)]
pub struct HttpGenerator {
    endpoint: JsonEndpoint,
}

impl HttpGenerator {
    /// `endpoint` is the service base URL; `/generate` is appended unless present.
    pub fn new(endpoint: &str) -> Self {
        Self { endpoint: JsonEndpoint::new(route_url(endpoint, "generate")) }
    }
}

impl TextGenerator for HttpGenerator {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, GenError> {
        let request = GenerateRequest { prompt, temperature: params.temperature, top_p: params.top_p };
        let response: GenerateResponse = self.endpoint.post(&request)?;
        Ok(response.text)
    }
}
