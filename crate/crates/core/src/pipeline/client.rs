//! Annotation clients.
//!
//! [`MockClient`] answers from bundled fixtures keyed by template id and
//! request seed. [`HttpClient`] posts a chat-completion request and retries
//! transient failures with exponential backoff.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::AnnotationRequest;

const DEFAULT_FIXTURES: &str = include_str!("../../assets/mock_responses.json");
const ANNOTATOR_SYSTEM: &str =
    "You write question-answer pairs about videos from their sampled frames.";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClientError {
    #[error("network error: {0}")]
    Network(String),
    #[error("request timed out")]
    Timeout,
    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16 },
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("could not decode response: {0}")]
    Decode(String),
    #[error("no mock fixture for template {template:?}")]
    MissingFixture { template: String },
    #[error("client misconfigured: {0}")]
    Config(String),
}

impl ClientError {
    /// Timeouts, connection failures, 408, 429 and 5xx.
    pub fn is_retryable(&self) -> bool {
        match self {
            ClientError::Network(_) | ClientError::Timeout => true,
            ClientError::Status { status, .. } => {
                matches!(status, 408 | 429) || (500..600).contains(status)
            }
            _ => false,
        }
    }
}

pub trait AnnotationClient: Send + Sync {
    fn send(&self, request: &AnnotationRequest) -> Result<String, ClientError>;

    /// Written into each record's `provenance` field.
    fn provenance(&self) -> String;
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct MockFixture {
    pub id: String,
    pub content: String,
}

/// Offline client returning canned responses.
#[derive(Debug, Clone)]
pub struct MockClient {
    fixtures: BTreeMap<String, Vec<MockFixture>>,
}

impl MockClient {
    pub fn new() -> Self {
        Self::from_json(DEFAULT_FIXTURES).expect("bundled fixtures parse")
    }

    /// Parses `{"<template id>": [{"id": .., "content": ..}, ..], ..}`.
    pub fn from_json(text: &str) -> Result<Self, ClientError> {
        let fixtures: BTreeMap<String, Vec<MockFixture>> =
            serde_json::from_str(text).map_err(|e| ClientError::Config(e.to_string()))?;
        Ok(Self { fixtures })
    }

    /// Fixture `(seed - 1) mod n` of the template's list, so seed 1 picks
    /// the first.
    pub fn fixture(&self, template_id: &str, seed: u64) -> Option<&MockFixture> {
        let list = self.fixtures.get(template_id).filter(|l| !l.is_empty())?;
        let idx = seed.wrapping_sub(1) % list.len() as u64;
        list.get(idx as usize)
    }
}

impl Default for MockClient {
    fn default() -> Self {
        Self::new()
    }
}

impl AnnotationClient for MockClient {
    fn send(&self, request: &AnnotationRequest) -> Result<String, ClientError> {
        self.fixture(&request.template_id, request.seed)
            .map(|f| f.content.clone())
            .ok_or_else(|| ClientError::MissingFixture {
                template: request.template_id.clone(),
            })
    }

    fn provenance(&self) -> String {
        "mock".to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Wait before retry number `retry` (0-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let secs = self.initial_backoff.as_secs_f64() * self.multiplier.powi(retry as i32);
        Duration::from_secs_f64(secs.min(self.max_backoff.as_secs_f64()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Body of a chat-completion POST.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn for_annotation(request: &AnnotationRequest, model: &str, temperature: f64) -> Self {
        Self {
            model: model.to_string(),
            messages: vec![
                ChatMessage {
                    role: "system".into(),
                    content: ANNOTATOR_SYSTEM.into(),
                },
                ChatMessage {
                    role: "user".into(),
                    content: request.prompt.clone(),
                },
            ],
            temperature,
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpClientConfig {
    pub endpoint: String,
    pub api_token: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

pub struct HttpClient {
    http: reqwest::blocking::Client,
    cfg: HttpClientConfig,
}

impl HttpClient {
    pub fn new(cfg: HttpClientConfig) -> Result<Self, ClientError> {
        if cfg.endpoint.is_empty() {
            return Err(ClientError::Config("endpoint is empty".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| ClientError::Config(e.to_string()))?;
        Ok(Self { http, cfg })
    }

    fn attempt(&self, body: &ChatRequest) -> Result<String, ClientError> {
        let mut req = self.http.post(&self.cfg.endpoint).json(body);
        if let Some(token) = &self.cfg.api_token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(map_reqwest)?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(map_reqwest)?;
        match status {
            200..=299 => {}
            401 | 403 => return Err(ClientError::Auth { status }),
            _ => return Err(ClientError::Status { status, body: text }),
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| ClientError::Decode(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| ClientError::Decode("response has no choices".into()))
    }

    /// Sends `request`, returning the reply and the number of attempts made.
    pub fn send_counted(&self, request: &AnnotationRequest) -> Result<(String, u32), ClientError> {
        let body = ChatRequest::for_annotation(request, &self.cfg.model, self.cfg.temperature);
        let mut retry = 0;
        loop {
            match self.attempt(&body) {
                Ok(text) => return Ok((text, retry + 1)),
                Err(e) if e.is_retryable() && retry < self.cfg.retry.max_retries => {
                    std::thread::sleep(self.cfg.retry.backoff(retry));
                    retry += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

fn map_reqwest(e: reqwest::Error) -> ClientError {
    if e.is_timeout() {
        ClientError::Timeout
    } else {
        ClientError::Network(e.to_string())
    }
}

impl AnnotationClient for HttpClient {
    fn send(&self, request: &AnnotationRequest) -> Result<String, ClientError> {
        self.send_counted(request).map(|(text, _)| text)
    }

    fn provenance(&self) -> String {
        format!("live:{}", self.cfg.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{Category, Source};

    fn request(template: Category, seed: u64) -> AnnotationRequest {
        AnnotationRequest {
            template_id: template.to_string(),
            video_id: "v".into(),
            category: template,
            source: Source::Webvid,
            caption: None,
            duration_s: 1.0,
            frames: vec![],
            prompt: "p".into(),
            seed,
        }
    }

    #[test]
    fn mock_fixture_lookup() {
        let mock = MockClient::new();
        assert_eq!(mock.fixture("perception", 1).unwrap().id, "P-1");
        assert_eq!(mock.fixture("perception", 5).unwrap().id, "P-1");
        assert_eq!(mock.fixture("temporal", 2).unwrap().id, "T-2");
        let text = mock.send(&request(Category::Perception, 1)).unwrap();
        assert!(text.contains("yellow umbrella"));
        assert!(mock.fixture("humor", 1).is_none());
    }

    #[test]
    fn every_category_has_fixtures() {
        let mock = MockClient::new();
        for c in Category::ALL {
            for seed in 0..8 {
                assert!(mock.send(&request(c, seed)).is_ok());
            }
        }
    }

    #[test]
    fn retryable_classification() {
        assert!(ClientError::Timeout.is_retryable());
        assert!(ClientError::Network("x".into()).is_retryable());
        assert!(ClientError::Status {
            status: 503,
            body: String::new()
        }
        .is_retryable());
        assert!(ClientError::Status {
            status: 429,
            body: String::new()
        }
        .is_retryable());
        assert!(!ClientError::Status {
            status: 400,
            body: String::new()
        }
        .is_retryable());
        assert!(!ClientError::Auth { status: 401 }.is_retryable());
    }

    #[test]
    fn backoff_grows_and_caps() {
        let p = RetryPolicy {
            max_retries: 5,
            initial_backoff: Duration::from_millis(100),
            max_backoff: Duration::from_millis(350),
            multiplier: 2.0,
        };
        assert_eq!(p.backoff(0), Duration::from_millis(100));
        assert_eq!(p.backoff(1), Duration::from_millis(200));
        assert_eq!(p.backoff(2), Duration::from_millis(350));
    }

    #[test]
    fn chat_body_shape() {
        let body = ChatRequest::for_annotation(&request(Category::General, 0), "gpt-x", 0.2);
        let json = serde_json::to_value(&body).unwrap();
        assert_eq!(json["model"], "gpt-x");
        assert_eq!(json["messages"][1]["role"], "user");
        assert_eq!(json["messages"][1]["content"], "p");
        assert_eq!(json["temperature"], 0.2);
    }
}
