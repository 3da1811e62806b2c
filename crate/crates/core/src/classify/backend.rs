//! Pluggable chat-completion backends: a real HTTP client, an in-process
//! scripted mock with request capture, and a replay client over a recorded
//! request log.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::PromptPayload;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("http error{}: {detail}", status.map(|s| format!(" (status {s})")).unwrap_or_default())]
    Http { status: Option<u16>, detail: String },
    #[error("quota exceeded")]
    QuotaExceeded,
    #[error("replay log has no entry for payload digest {digest}")]
    ReplayMiss { digest: String },
    #[error("mock script has no entry for payload digest {digest}")]
    Unscripted { digest: String },
}

impl BackendError {
    /// Transient failures retry with exponential backoff; deterministic
    /// misses (replay/mock) fail immediately.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            BackendError::Timeout(_) | BackendError::Http { .. } | BackendError::QuotaExceeded
        )
    }
}

/// A chat-completion service: takes a rendered prompt, returns the model's
/// raw text completion.
pub trait Backend: Send + Sync {
    /// Identifier recorded on every label this backend produces.
    fn id(&self) -> String;

    fn send(&self, payload: &PromptPayload) -> Result<String, BackendError>;
}

/// Chat-completion-style HTTP client: POSTs `{model, messages, temperature}`
/// and reads `choices[0].message.content`.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    api_key: Option<String>,
    temperature: f64,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatTurn<'a>; 2],
    temperature: f64,
}

#[derive(Serialize)]
struct ChatTurn<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

impl HttpBackend {
    pub fn new(
        url: String,
        model: String,
        api_key: Option<String>,
        temperature: f64,
        timeout: Duration,
    ) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Http {
                status: None,
                detail: e.to_string(),
            })?;
        Ok(Self {
            client,
            url,
            model,
            api_key,
            temperature,
        })
    }
}

impl Backend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}", self.model)
    }

    fn send(&self, payload: &PromptPayload) -> Result<String, BackendError> {
        let body = ChatRequest {
            model: &self.model,
            messages: [
                ChatTurn {
                    role: "system",
                    content: &payload.system_instruction,
                },
                ChatTurn {
                    role: "user",
                    content: &payload.user_content,
                },
            ],
            temperature: self.temperature,
        };
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout(e.to_string())
            } else {
                BackendError::Http {
                    status: e.status().map(|s| s.as_u16()),
                    detail: e.to_string(),
                }
            }
        })?;
        let status = resp.status();
        if status.as_u16() == 429 {
            return Err(BackendError::QuotaExceeded);
        }
        if !status.is_success() {
            return Err(BackendError::Http {
                status: Some(status.as_u16()),
                detail: resp.text().unwrap_or_default(),
            });
        }
        let parsed: ChatResponse = resp.json().map_err(|e| BackendError::Http {
            status: Some(status.as_u16()),
            detail: format!("unparseable completion body: {e}"),
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or(BackendError::Http {
                status: Some(status.as_u16()),
                detail: "completion had no choices".into(),
            })
    }
}

/// One request the mock backend saw, in arrival order.
#[derive(Debug, Clone)]
pub struct CapturedRequest {
    pub payload: PromptPayload,
    pub response: Result<String, String>,
}

type Responder = Box<dyn Fn(&PromptPayload) -> Result<String, BackendError> + Send + Sync>;

/// In-process backend scripted by test fixtures. Every request (and its
/// outcome) is captured for later assertions.
pub struct MockBackend {
    responder: Responder,
    captured: Mutex<Vec<CapturedRequest>>,
}

impl MockBackend {
    pub fn with_responder(
        responder: impl Fn(&PromptPayload) -> Result<String, BackendError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            responder: Box::new(responder),
            captured: Mutex::new(Vec::new()),
        }
    }

    /// Fixed digest-to-response script; unknown digests error.
    pub fn scripted(script: HashMap<String, String>) -> Self {
        Self::with_responder(move |payload| {
            let digest = payload.digest();
            script
                .get(&digest)
                .cloned()
                .ok_or(BackendError::Unscripted { digest })
        })
    }

    pub fn captured(&self) -> Vec<CapturedRequest> {
        self.captured.lock().unwrap().clone()
    }

    pub fn request_count(&self) -> usize {
        self.captured.lock().unwrap().len()
    }
}

impl Backend for MockBackend {
    fn id(&self) -> String {
        "mock".into()
    }

    fn send(&self, payload: &PromptPayload) -> Result<String, BackendError> {
        let result = (self.responder)(payload);
        self.captured.lock().unwrap().push(CapturedRequest {
            payload: payload.clone(),
            response: result
                .as_ref()
                .map(|s| s.clone())
                .map_err(|e| e.to_string()),
        });
        result
    }
}

/// On-disk line format shared by the recorder and the replay backend.
#[derive(Serialize, Deserialize)]
struct CaptureRecord {
    payload_digest: String,
    response: String,
}

/// Deterministic backend that answers from a recorded request log.
pub struct ReplayBackend {
    responses: HashMap<String, String>,
}

impl ReplayBackend {
    pub fn from_log(path: &Path) -> Result<Self, std::io::Error> {
        let file = std::fs::File::open(path)?;
        let mut responses = HashMap::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: CaptureRecord = serde_json::from_str(&line)
                .map_err(|e| std::io::Error::other(format!("bad capture record: {e}")))?;
            responses.insert(rec.payload_digest, rec.response);
        }
        Ok(Self { responses })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl Backend for ReplayBackend {
    fn id(&self) -> String {
        "replay".into()
    }

    fn send(&self, payload: &PromptPayload) -> Result<String, BackendError> {
        let digest = payload.digest();
        self.responses
            .get(&digest)
            .cloned()
            .ok_or(BackendError::ReplayMiss { digest })
    }
}

/// Wraps any backend and appends `{payload_digest, response}` records to a
/// log that [`ReplayBackend`] can replay later.
pub struct RecordingBackend<B> {
    inner: B,
    log: Mutex<RecorderState>,
}

struct RecorderState {
    writer: std::io::BufWriter<std::fs::File>,
    seen: HashSet<String>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn create(inner: B, log_path: &Path) -> Result<Self, std::io::Error> {
        if let Some(parent) = log_path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(log_path)?;
        Ok(Self {
            inner,
            log: Mutex::new(RecorderState {
                writer: std::io::BufWriter::new(file),
                seen: HashSet::new(),
            }),
        })
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn send(&self, payload: &PromptPayload) -> Result<String, BackendError> {
        let response = self.inner.send(payload)?;
        let digest = payload.digest();
        let mut state = self.log.lock().unwrap();
        if state.seen.insert(digest.clone()) {
            let record = CaptureRecord {
                payload_digest: digest,
                response: response.clone(),
            };
            let line = serde_json::to_string(&record).expect("capture record serializes");
            let _ = writeln!(state.writer, "{line}");
            let _ = state.writer.flush();
        }
        Ok(response)
    }
}
