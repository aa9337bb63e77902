use std::sync::Mutex;
use std::time::Duration;

use thiserror::Error;

use crate::message::Message;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("credential rejected: {0}")]
    Credential(String),
    #[error("request timed out after {0} s")]
    Timeout(u64),
    #[error("provider returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected provider response: {0}")]
    Protocol(String),
    #[error("scripted transcript exhausted after {0} responses")]
    Exhausted(usize),
}

impl ClientError {
    /// Whether repeating the same request might succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            ClientError::Transport(_) | ClientError::Timeout(_) => true,
            ClientError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// Anything that maps a role-tagged prompt to response text.
pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &[Message]) -> Result<String, ClientError>;
}

impl<C: LlmClient + ?Sized> LlmClient for &C {
    fn complete(&self, prompt: &[Message]) -> Result<String, ClientError> {
        (**self).complete(prompt)
    }
}

impl<C: LlmClient + ?Sized> LlmClient for Box<C> {
    fn complete(&self, prompt: &[Message]) -> Result<String, ClientError> {
        (**self).complete(prompt)
    }
}

impl<C: LlmClient + ?Sized> LlmClient for std::sync::Arc<C> {
    fn complete(&self, prompt: &[Message]) -> Result<String, ClientError> {
        (**self).complete(prompt)
    }
}

#[derive(Debug, Error)]
#[error("transcript line {line}: {reason}")]
pub struct TranscriptError {
    pub line: usize,
    pub reason: String,
}

/// Replays canned responses in order, for tests and offline runs.
#[derive(Debug)]
pub struct ScriptedClient {
    responses: Vec<String>,
    repeat: bool,
    delay: Duration,
    state: Mutex<State>,
}

#[derive(Debug, Default)]
struct State {
    next: usize,
    calls: usize,
    prompts: Vec<Vec<Message>>,
}

impl ScriptedClient {
    pub fn new<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        ScriptedClient {
            responses: responses.into_iter().map(Into::into).collect(),
            repeat: false,
            delay: Duration::ZERO,
            state: Mutex::new(State::default()),
        }
    }

    /// Cycles through the responses forever instead of running out.
    pub fn repeating(mut self) -> Self {
        self.repeat = true;
        self
    }

    /// Sleeps before every reply, to mimic a slow provider.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    /// Parses a transcript: one JSON string literal per line, blank lines
    /// skipped.
    pub fn from_transcript(text: &str) -> Result<Self, TranscriptError> {
        let mut responses = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let response: String = serde_json::from_str(line).map_err(|e| TranscriptError {
                line: i + 1,
                reason: e.to_string(),
            })?;
            responses.push(response);
        }
        Ok(ScriptedClient::new(responses))
    }

    /// Inverse of [`ScriptedClient::from_transcript`].
    pub fn to_transcript<S: AsRef<str>>(responses: &[S]) -> String {
        responses
            .iter()
            .map(|r| serde_json::to_string(r.as_ref()).expect("strings serialize") + "\n")
            .collect()
    }

    pub fn calls(&self) -> usize {
        self.state.lock().unwrap().calls
    }

    /// Every prompt received so far.
    pub fn prompts(&self) -> Vec<Vec<Message>> {
        self.state.lock().unwrap().prompts.clone()
    }
}

impl LlmClient for ScriptedClient {
    fn complete(&self, prompt: &[Message]) -> Result<String, ClientError> {
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let mut state = self.state.lock().unwrap();
        state.calls += 1;
        state.prompts.push(prompt.to_vec());
        if self.responses.is_empty() || (!self.repeat && state.next >= self.responses.len()) {
            return Err(ClientError::Exhausted(self.responses.len()));
        }
        let response = self.responses[state.next % self.responses.len()].clone();
        state.next += 1;
        Ok(response)
    }
}
