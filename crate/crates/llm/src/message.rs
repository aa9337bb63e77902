use std::collections::BTreeSet;
use std::fmt;

use rulemine_core::{Activity, Rule};
use serde::{Deserialize, Serialize};

use crate::prompt::PromptVariant;

/// Error-correction rounds allowed per expert message.
pub const DEFAULT_MAX_ATTEMPTS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    DomainExpert,
    Assistant,
    Service,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::DomainExpert => "domain-expert",
            Role::Assistant => "assistant",
            Role::Service => "service",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

impl Message {
    pub fn new(role: Role, text: impl Into<String>) -> Self {
        Message {
            role,
            text: text.into(),
        }
    }

    pub fn expert(text: impl Into<String>) -> Self {
        Message::new(Role::DomainExpert, text)
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Message::new(Role::Assistant, text)
    }

    pub fn service(text: impl Into<String>) -> Self {
        Message::new(Role::Service, text)
    }
}

/// State of one expert's dialogue. The history only ever grows.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    history: Vec<Message>,
    pub selected_rules: BTreeSet<Rule>,
    alphabet: BTreeSet<Activity>,
    pub variant: PromptVariant,
    max_attempts: usize,
    attempts_remaining: usize,
}

impl Conversation {
    pub fn new(alphabet: BTreeSet<Activity>) -> Self {
        Conversation {
            history: Vec::new(),
            selected_rules: BTreeSet::new(),
            alphabet,
            variant: PromptVariant::default(),
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            attempts_remaining: DEFAULT_MAX_ATTEMPTS,
        }
    }

    pub fn with_variant(mut self, variant: PromptVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_max_attempts(mut self, max_attempts: usize) -> Self {
        self.max_attempts = max_attempts;
        self.attempts_remaining = max_attempts;
        self
    }

    pub fn history(&self) -> &[Message] {
        &self.history
    }

    pub fn alphabet(&self) -> &BTreeSet<Activity> {
        &self.alphabet
    }

    pub fn max_attempts(&self) -> usize {
        self.max_attempts
    }

    pub fn attempts_remaining(&self) -> usize {
        self.attempts_remaining
    }

    /// Records a completed exchange: the message sent and the reply.
    pub fn record_exchange(&mut self, sent: Message, reply: Message) {
        self.history.push(sent);
        self.history.push(reply);
    }

    pub(crate) fn reset_attempts(&mut self) {
        self.attempts_remaining = self.max_attempts;
    }

    pub(crate) fn consume_attempt(&mut self) {
        self.attempts_remaining = self.attempts_remaining.saturating_sub(1);
    }
}
