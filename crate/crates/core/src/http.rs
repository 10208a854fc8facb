//! Minimal blocking JSON-over-HTTP client used by the provider endpoints.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("request to {url} failed: {message}")]
    Transport { url: String, message: String },
    #[error("{url} answered with status {status}")]
    Status { url: String, status: u16 },
    #[error("{url} returned a malformed body: {message}")]
    Decode { url: String, message: String },
}

/// A JSON endpoint with a pooled connection.
#[derive(Debug, Clone)]
pub(crate) struct JsonEndpoint {
    agent: ureq::Agent,
    url: String,
}

impl JsonEndpoint {
    pub(crate) fn new(url: String) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(Duration::from_secs(300))).build().into();
        Self { agent, url }
    }

    pub(crate) fn post<Req: Serialize, Resp: DeserializeOwned>(&self, body: &Req) -> Result<Resp, HttpError> {
        let url = &self.url;
        let response = self.agent.post(url).send_json(body).map_err(|e| match e {
            ureq::Error::StatusCode(status) => HttpError::Status { url: url.clone(), status },
            other => HttpError::Transport { url: url.clone(), message: other.to_string() },
        })?;
        response
            .into_body()
            .read_json::<Resp>()
            .map_err(|e| HttpError::Decode { url: url.clone(), message: e.to_string() })
    }
}

/// Appends `route` to `endpoint` unless it already ends with it.
pub(crate) fn route_url(endpoint: &str, route: &str) -> String {
    if endpoint.trim_end_matches('/').ends_with(&format!("/{route}")) {
        endpoint.to_string()
    } else {
        join(endpoint, route)
    }
}

/// Joins a base endpoint and a route, tolerating a trailing slash.
pub(crate) fn join(base: &str, route: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), route.trim_start_matches('/'))
}
