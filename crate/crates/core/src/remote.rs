//! HTTP plumbing shared by the remote extractor and embedder: a JSON POST
//! helper, transport errors, and bounded retry with exponential backoff.

use std::thread;
use std::time::Duration;

use thiserror::Error;

/// Failure talking to a remote endpoint.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{message}")]
pub struct TransportError {
    pub message: String,
    /// Connection failures, timeouts, 429 and 5xx are worth another attempt.
    pub retryable: bool,
}

impl TransportError {
    pub fn retryable(message: impl Into<String>) -> Self {
        TransportError {
            message: message.into(),
            retryable: true,
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        TransportError {
            message: message.into(),
            retryable: false,
        }
    }

    pub(crate) fn from_status(status: u16, body: &str) -> Self {
        let message = format!("HTTP {status}: {}", body.chars().take(300).collect::<String>());
        if status == 429 || status >= 500 {
            Self::retryable(message)
        } else {
            Self::fatal(message)
        }
    }
}

/// POST a JSON body with bearer auth and decode a JSON response.
pub fn post_json(
    agent: &ureq::Agent,
    url: &str,
    api_key: Option<&str>,
    body: &serde_json::Value,
) -> Result<serde_json::Value, TransportError> {
    let mut req = agent.post(url).header("Content-Type", "application/json");
    if let Some(key) = api_key {
        req = req.header("Authorization", &format!("Bearer {key}"));
    }
    let mut resp = req
        .send_json(body)
        .map_err(|e| TransportError::retryable(format!("{url}: {e}")))?;
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| TransportError::retryable(format!("{url}: reading body: {e}")))?;
    if !(200..300).contains(&status) {
        return Err(TransportError::from_status(status, &text));
    }
    serde_json::from_str(&text).map_err(|e| TransportError::fatal(format!("{url}: response is not JSON: {e}")))
}

pub fn http_agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Attempts after the first one.
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            max_retries: 0,
            ..Default::default()
        }
    }

    /// Run `op` until it succeeds, fails with a non-retryable error, or the
    /// retry budget is spent. Returns the last error on exhaustion.
    pub fn run<T, E>(&self, mut op: impl FnMut() -> Result<T, E>, is_retryable: impl Fn(&E) -> bool) -> Result<T, E> {
        let mut delay = self.initial_backoff;
        let mut attempt = 0;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if attempt < self.max_retries && is_retryable(&e) => {
                    attempt += 1;
                    if !delay.is_zero() {
                        thread::sleep(delay);
                    }
                    delay = delay.mul_f64(self.multiplier);
                }
                Err(e) => return Err(e),
            }
        }
    }
}
