//! Minimal JSON-over-HTTP client shared by the remote backends.

use std::time::Duration;

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("request to {url} failed: {message}")]
    Network { url: String, message: String },
    #[error("{url} returned status {status}")]
    Status { url: String, status: u16 },
    #[error("{url} returned a malformed body: {message}")]
    Malformed { url: String, message: String },
}

impl HttpError {
    fn retryable(&self) -> bool {
        match self {
            HttpError::Network { .. } => true,
            HttpError::Status { status, .. } => *status == 429 || *status >= 500,
            HttpError::Malformed { .. } => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct JsonClient {
    client: reqwest::blocking::Client,
    bearer: Option<String>,
    max_retries: u32,
    backoff: Duration,
}

impl JsonClient {
    pub fn new(timeout: Duration, bearer: Option<String>, max_retries: u32) -> Result<Self, HttpError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| HttpError::Network {
                url: String::new(),
                message: e.to_string(),
            })?;
        Ok(JsonClient {
            client,
            bearer,
            max_retries,
            backoff: Duration::from_millis(200),
        })
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    /// POSTs `body`; transport errors, 429 and 5xx are retried up to
    /// `max_retries` more times.
    pub fn post(&self, url: &str, body: &Value) -> Result<Value, HttpError> {
        let mut attempt = 0;
        loop {
            match self.post_once(url, body) {
                Ok(v) => return Ok(v),
                Err(err) if err.retryable() && attempt < self.max_retries => {
                    attempt += 1;
                    log::warn!("retrying {url} (attempt {attempt}): {err}");
                    std::thread::sleep(self.backoff * attempt);
                }
                Err(err) => return Err(err),
            }
        }
    }

    fn post_once(&self, url: &str, body: &Value) -> Result<Value, HttpError> {
        let mut request = self.client.post(url).json(body);
        if let Some(token) = &self.bearer {
            request = request.bearer_auth(token);
        }
        let response = request.send().map_err(|e| HttpError::Network {
            url: url.to_string(),
            message: e.to_string(),
        })?;
        let status = response.status();
        if !status.is_success() {
            return Err(HttpError::Status {
                url: url.to_string(),
                status: status.as_u16(),
            });
        }
        response.json::<Value>().map_err(|e| HttpError::Malformed {
            url: url.to_string(),
            message: e.to_string(),
        })
    }
}

/// Reads the bearer token from the named environment variable.
pub fn credential_from_env(var: Option<&str>) -> Result<Option<String>, String> {
    match var {
        None => Ok(None),
        Some(name) => std::env::var(name)
            .map(Some)
            .map_err(|_| format!("environment variable {name} is not set")),
    }
}
