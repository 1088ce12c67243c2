//! Chat-completion client with record/replay transports.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{parse_proposal, Agent, AgentError, ParseError, Proposal, ProposalRequest};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".into(), content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: "assistant".into(), content: content.into() }
    }
}

/// Request body in the OpenAI-style chat-completion wire format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("network error: {0}")]
    Network(String),
    #[error("HTTP status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("replay: {0}")]
    Replay(String),
    #[error("transcript io: {0}")]
    Io(String),
    #[error("missing API key: environment variable {0} is not set")]
    MissingKey(String),
}

impl TransportError {
    fn is_retryable(&self) -> bool {
        match self {
            TransportError::Network(_) => true,
            TransportError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

pub trait ChatTransport {
    /// Returns the assistant message content.
    fn complete(&mut self, req: &ChatRequest) -> Result<String, TransportError>;
}

impl<T: ChatTransport + ?Sized> ChatTransport for Box<T> {
    fn complete(&mut self, req: &ChatRequest) -> Result<String, TransportError> {
        (**self).complete(req)
    }
}

/// Live HTTP transport: `POST {base_url}/chat/completions`.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    /// Reads the bearer token from `api_key_env`; an unset variable sends no
    /// authorization header.
    pub fn new(base_url: &str, api_key_env: &str, timeout: Duration) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportError::Network(e.to_string()))?;
        Ok(Self {
            client,
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key: std::env::var(api_key_env).ok().filter(|k| !k.is_empty()),
        })
    }
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

impl ChatTransport for HttpTransport {
    fn complete(&mut self, req: &ChatRequest) -> Result<String, TransportError> {
        let mut builder = self.client.post(&self.url).json(req);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let resp = builder.send().map_err(|e| TransportError::Network(e.to_string()))?;
        let status = resp.status();
        let body = resp.text().map_err(|e| TransportError::Network(e.to_string()))?;
        if !status.is_success() {
            return Err(TransportError::Status { status: status.as_u16(), body });
        }
        let wire: WireResponse =
            serde_json::from_str(&body).map_err(|e| TransportError::Malformed(e.to_string()))?;
        wire.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| TransportError::Malformed("no message content".into()))
    }
}

/// One line of `transcript.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request: ChatRequest,
    pub response: String,
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptEntry>, TransportError> {
    let file = File::open(path).map_err(|e| TransportError::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| TransportError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line)
            .map_err(|e| TransportError::Replay(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(entry);
    }
    Ok(out)
}

/// Serves recorded responses and never touches the network. Each request
/// consumes the first not-yet-served entry at or after the cursor whose
/// request is identical, so a resumed run skips entries of iterations it
/// already holds.
pub struct ReplayTransport {
    entries: Vec<TranscriptEntry>,
    cursor: usize,
}

impl ReplayTransport {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        Self { entries, cursor: 0 }
    }

    pub fn from_file(path: &Path) -> Result<Self, TransportError> {
        Ok(Self::new(read_transcript(path)?))
    }
}

impl ChatTransport for ReplayTransport {
    fn complete(&mut self, req: &ChatRequest) -> Result<String, TransportError> {
        let found = self.entries[self.cursor..].iter().position(|e| &e.request == req);
        match found {
            Some(offset) => {
                let idx = self.cursor + offset;
                self.cursor = idx + 1;
                Ok(self.entries[idx].response.clone())
            }
            None => Err(TransportError::Replay(format!(
                "no recorded response for this request after entry {}",
                self.cursor
            ))),
        }
    }
}

/// Appends every successful exchange to a JSONL transcript.
pub struct RecordingTransport<T> {
    inner: T,
    path: PathBuf,
}

impl<T: ChatTransport> RecordingTransport<T> {
    pub fn new(inner: T, path: impl Into<PathBuf>) -> Self {
        Self { inner, path: path.into() }
    }
}

impl<T: ChatTransport> ChatTransport for RecordingTransport<T> {
    fn complete(&mut self, req: &ChatRequest) -> Result<String, TransportError> {
        let response = self.inner.complete(req)?;
        let entry = TranscriptEntry { request: req.clone(), response: response.clone() };
        let line = serde_json::to_string(&entry).map_err(|e| TransportError::Io(e.to_string()))?;
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| TransportError::Io(format!("{}: {e}", self.path.display())))?;
        writeln!(f, "{line}").and_then(|_| f.sync_data()).map_err(|e| TransportError::Io(e.to_string()))?;
        Ok(response)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub temperature: f64,
    pub timeout_s: f64,
    /// Transport attempts per message before giving up.
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles after each failure.
    pub backoff_ms: u64,
    /// Include ON/OFF barrier heights in optimization prompts.
    pub include_bands: bool,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "o3".into(),
            api_key_env: "TCADFLOW_API_KEY".into(),
            temperature: 0.2,
            timeout_s: 600.0,
            max_attempts: 3,
            backoff_ms: 1000,
            include_bands: false,
        }
    }
}

pub const FORMAT_REMINDER: &str = "Your previous reply could not be used. Reply again with exactly one JSON \
object containing every design parameter key with a plain numeric value, plus a \"rationale\" string. Do \
not add other keys.";

/// Agent that sends the prepared prompt to a chat-completion transport.
pub struct LlmAgent {
    transport: Box<dyn ChatTransport>,
    config: LlmConfig,
}

impl LlmAgent {
    pub fn new(transport: Box<dyn ChatTransport>, config: LlmConfig) -> Self {
        Self { transport, config }
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    fn send(&mut self, req: &ChatRequest) -> Result<String, TransportError> {
        let attempts = self.config.max_attempts.max(1);
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut attempt = 1;
        loop {
            match self.transport.complete(req) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retryable() && attempt < attempts => {
                    tracing::warn!(attempt, error = %e, "chat request failed; backing off");
                    thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn request(&self, messages: Vec<ChatMessage>) -> ChatRequest {
        ChatRequest { model: self.config.model.clone(), messages, temperature: self.config.temperature }
    }
}

impl Agent for LlmAgent {
    fn name(&self) -> &str {
        "llm"
    }

    fn propose(&mut self, req: &ProposalRequest<'_>) -> Result<Proposal, AgentError> {
        let mut messages = vec![ChatMessage::user(req.prompt)];
        let first = self.send(&self.request(messages.clone()))?;
        let err: ParseError = match parse_proposal(&first, req.space) {
            Ok(p) => return Ok(p),
            Err(e) => e,
        };
        tracing::warn!(error = %err, "unusable proposal; retrying with a format reminder");
        messages.push(ChatMessage::assistant(first));
        messages.push(ChatMessage::user(format!("{FORMAT_REMINDER}\nProblem: {err}")));
        let second = self.send(&self.request(messages))?;
        match parse_proposal(&second, req.space) {
            Ok(mut p) => {
                p.retries = 1;
                Ok(p)
            }
            Err(last) => Err(AgentError::Proposal { attempts: 2, last }),
        }
    }
}

#[cfg(test)]
mod tests {
    use std::cell::RefCell;
    use std::rc::Rc;

    use super::*;
    use crate::agent::{GuidanceMode, PromptKind};
    use crate::params::{DesignParams, ParamSpace, SpecTargets};

    struct Scripted {
        replies: Vec<Result<String, TransportError>>,
        seen: Rc<RefCell<Vec<ChatRequest>>>,
    }

    impl ChatTransport for Scripted {
        fn complete(&mut self, req: &ChatRequest) -> Result<String, TransportError> {
            self.seen.borrow_mut().push(req.clone());
            if self.replies.is_empty() {
                return Err(TransportError::Network("connection refused".into()));
            }
            self.replies.remove(0)
        }
    }

    fn fast_config() -> LlmConfig {
        LlmConfig { backoff_ms: 1, ..LlmConfig::default() }
    }

    fn propose(agent: &mut LlmAgent) -> Result<Proposal, AgentError> {
        let seed = DesignParams::bad_seed();
        let space = ParamSpace::default();
        let targets = SpecTargets::default();
        agent.propose(&ProposalRequest {
            kind: PromptKind::Normal,
            prompt: "design please",
            history: &[],
            seed_design: &seed,
            space: &space,
            targets: &targets,
            mode: GuidanceMode::Quantitative,
        })
    }

    fn good_reply() -> String {
        format!("```json\n{}\n```", serde_json::to_string(&DesignParams::reference()).unwrap())
    }

    #[test]
    fn malformed_then_valid_counts_one_retry() {
        let seen = Rc::new(RefCell::new(Vec::new()));
        let t = Scripted { replies: vec![Ok("no idea".into()), Ok(good_reply())], seen: seen.clone() };
        let mut agent = LlmAgent::new(Box::new(t), fast_config());
        let p = propose(&mut agent).unwrap();
        assert_eq!(p.retries, 1);
        assert_eq!(p.params, DesignParams::reference());
        let seen = seen.borrow();
        assert_eq!(seen[1].messages.len(), 3);
        assert!(seen[1].messages[2].content.starts_with(FORMAT_REMINDER));
    }

    #[test]
    fn endpoint_down_fails_after_three_attempts() {
        let seen = Rc::new(RefCell::new(Vec::new()));
        let t = Scripted { replies: vec![], seen: seen.clone() };
        let mut agent = LlmAgent::new(Box::new(t), fast_config());
        assert!(matches!(propose(&mut agent), Err(AgentError::Transport(TransportError::Network(_)))));
        assert_eq!(seen.borrow().len(), 3);
    }

    #[test]
    fn two_bad_replies_surface_a_proposal_error() {
        let seen = Rc::new(RefCell::new(Vec::new()));
        let t = Scripted { replies: vec![Ok("nope".into()), Ok("still nope".into())], seen };
        let mut agent = LlmAgent::new(Box::new(t), fast_config());
        assert!(matches!(
            propose(&mut agent),
            Err(AgentError::Proposal { attempts: 2, last: ParseError::NoJsonFound })
        ));
    }

    #[test]
    fn record_then_replay_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("transcript.jsonl");
        let seen = Rc::new(RefCell::new(Vec::new()));
        let live = Scripted { replies: vec![Ok("junk".into()), Ok(good_reply())], seen };
        let mut recorded = LlmAgent::new(Box::new(RecordingTransport::new(live, &path)), fast_config());
        let a = propose(&mut recorded).unwrap();
        assert_eq!(read_transcript(&path).unwrap().len(), 2);
        let mut replay = LlmAgent::new(Box::new(ReplayTransport::from_file(&path).unwrap()), fast_config());
        let b = propose(&mut replay).unwrap();
        assert_eq!(a, b);
        assert!(matches!(propose(&mut replay), Err(AgentError::Transport(TransportError::Replay(_)))));
    }

    #[test]
    fn http_transport_reports_unreachable_endpoint() {
        let mut t = HttpTransport::new("http://127.0.0.1:9", "TCADFLOW_TEST_UNSET_KEY", Duration::from_secs(2)).unwrap();
        let req = ChatRequest { model: "m".into(), messages: vec![ChatMessage::user("hi")], temperature: 0.2 };
        assert!(matches!(t.complete(&req), Err(TransportError::Network(_))));
    }
}
