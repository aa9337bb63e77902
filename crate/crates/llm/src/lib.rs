//! The conversation loop that turns expert text into validated Declare rules
//! through an LLM, and the metrics used to score that extraction.

pub mod client;
pub mod cycle;
pub mod evaluation;
pub mod http;
pub mod message;
pub mod outcome;
pub mod prompt;

pub use client::{ClientError, LlmClient, ScriptedClient, TranscriptError};
pub use cycle::{run_cycle, Attempt, CycleError, CycleOutcome, CycleReport};
pub use evaluation::{
    load_cases, paragraphs, run_suite, score, select, CaseReport, EvalCase, EvalError, EvalReport,
    Granularity, SuiteOptions,
};
pub use http::{HttpClient, Provider, ProviderConfig};
pub use message::{Conversation, Message, Role, DEFAULT_MAX_ATTEMPTS};
pub use outcome::{parse_outcome, validate, Diagnostic, LlmOutcome};
pub use prompt::{build_prompt, task_description, PromptError, PromptVariant};
