//! Blocking JSON-over-HTTP helpers shared by the remote backend, parse and
//! entailment clients.

use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use serde_json::Value;

/// Timeouts, retry budget and credentials for one remote endpoint.
#[derive(Debug, Clone)]
pub struct HttpSettings {
    pub timeout: Duration,
    /// Additional attempts after the first one.
    pub retries: u32,
    /// Delay before the first retry; doubles on each further retry.
    pub backoff: Duration,
    pub bearer_token: Option<String>,
}

impl Default for HttpSettings {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(60),
            retries: 2,
            backoff: Duration::from_millis(250),
            bearer_token: None,
        }
    }
}

/// Outcome of a single POST, before any retry decision.
#[derive(Debug)]
pub enum PostFailure {
    /// Connection, timeout or body read failure.
    Transport(String),
    /// The server answered with a non-200 status.
    Status { code: u16, body: String },
}

impl PostFailure {
    /// Whether another attempt could plausibly succeed.
    pub fn is_transient(&self) -> bool {
        match self {
            PostFailure::Transport(_) => true,
            PostFailure::Status { code, .. } => *code >= 500 || *code == 429,
        }
    }
}

impl std::fmt::Display for PostFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PostFailure::Transport(msg) => write!(f, "transport failure: {msg}"),
            PostFailure::Status { code, body } => write!(f, "HTTP {code}: {body}"),
        }
    }
}

pub fn build_client(settings: &HttpSettings) -> Client {
    Client::builder()
        .timeout(settings.timeout)
        .build()
        .unwrap_or_else(|_| Client::new())
}

/// Joins a base URL and an absolute route without doubling slashes.
pub fn endpoint(base: &str, route: &str) -> String {
    format!("{}{}", base.trim_end_matches('/'), route)
}

/// One POST of a JSON body; returns the parsed JSON of a 200 response.
pub fn post_json_once(
    client: &Client,
    url: &str,
    body: &Value,
    bearer: Option<&str>,
) -> Result<Value, PostFailure> {
    let mut request = client.post(url).json(body);
    if let Some(token) = bearer {
        request = request.bearer_auth(token);
    }
    let response = request.send().map_err(|e| PostFailure::Transport(e.to_string()))?;
    let status = response.status().as_u16();
    let text = response.text().map_err(|e| PostFailure::Transport(e.to_string()))?;
    if status != 200 {
        return Err(PostFailure::Status { code: status, body: text });
    }
    serde_json::from_str(&text).map_err(|e| PostFailure::Status {
        code: status,
        body: format!("invalid JSON body: {e}"),
    })
}

/// POSTs with exponential backoff on transient failures.
///
/// Returns the last failure once the retry budget is spent, or immediately
/// for non-transient failures.
pub fn post_json_with_retry(
    client: &Client,
    url: &str,
    body: &Value,
    settings: &HttpSettings,
) -> Result<Value, PostFailure> {
    let mut delay = settings.backoff;
    let mut attempt = 0;
    loop {
        match post_json_once(client, url, body, settings.bearer_token.as_deref()) {
            Ok(v) => return Ok(v),
            Err(e) if e.is_transient() && attempt < settings.retries => {
                log::debug!("POST {url} failed ({e}); retry {} of {}", attempt + 1, settings.retries);
                thread::sleep(delay);
                delay = delay.saturating_mul(2);
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}
