//! JSON-over-HTTP plumbing, swappable for tests.

use std::sync::Mutex;
use std::time::Duration;

use serde_json::Value;

/// Why a request did not produce a JSON body.
#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    Timeout(String),
    Unreachable(String),
    /// Non-2xx status.
    Status(String),
    /// 2xx, but the body is not JSON.
    BadResponse(String),
}

/// One JSON POST. Implementations must be callable from many threads.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        body: &Value,
        bearer: Option<&str>,
        timeout: Duration,
    ) -> Result<Value, TransportError>;
}

/// Blocking reqwest client. Do not call it from inside an async runtime
/// worker; wrap the call in a blocking task instead.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new() -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| TransportError::Unreachable(format!("http client: {e}")))?;
        Ok(Self { client })
    }
}

impl Transport for HttpTransport {
    fn post_json(
        &self,
        url: &str,
        body: &Value,
        bearer: Option<&str>,
        timeout: Duration,
    ) -> Result<Value, TransportError> {
        let mut req = self.client.post(url).timeout(timeout).json(body);
        if let Some(key) = bearer {
            req = req.bearer_auth(key);
        }
        let classify = |e: reqwest::Error| {
            // Error text can echo request details; keep only the kind.
            let kind = if e.is_connect() {
                "connection failed"
            } else if e.is_body() {
                "body error"
            } else {
                "request failed"
            };
            if e.is_timeout() {
                TransportError::Timeout(format!("{url}: timed out"))
            } else {
                TransportError::Unreachable(format!("{url}: {kind}"))
            }
        };
        let resp = req.send().map_err(classify)?;
        let status = resp.status();
        if !status.is_success() {
            return Err(TransportError::Status(format!("{url}: HTTP {status}")));
        }
        let text = resp.text().map_err(classify)?;
        serde_json::from_str(&text).map_err(|e| TransportError::BadResponse(format!("{url}: not JSON ({e})")))
    }
}

/// A request as seen by [`RecordingTransport`].
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedRequest {
    pub url: String,
    pub body: Value,
    pub bearer: Option<String>,
}

/// Returns scripted responses in order and keeps every request.
#[derive(Default)]
pub struct RecordingTransport {
    responses: Mutex<Vec<Result<Value, TransportError>>>,
    requests: Mutex<Vec<RecordedRequest>>,
}

impl RecordingTransport {
    pub fn new(responses: Vec<Result<Value, TransportError>>) -> Self {
        let mut responses = responses;
        responses.reverse();
        Self { responses: Mutex::new(responses), requests: Mutex::default() }
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.requests.lock().expect("lock").clone()
    }
}

impl Transport for RecordingTransport {
    fn post_json(
        &self,
        url: &str,
        body: &Value,
        bearer: Option<&str>,
        _timeout: Duration,
    ) -> Result<Value, TransportError> {
        self.requests.lock().expect("lock").push(RecordedRequest {
            url: url.to_string(),
            body: body.clone(),
            bearer: bearer.map(str::to_string),
        });
        self.responses
            .lock()
            .expect("lock")
            .pop()
            .unwrap_or_else(|| Err(TransportError::Unreachable(format!("{url}: no scripted response"))))
    }
}
