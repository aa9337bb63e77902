//! The bounded error-correction loop around one expert message.

use rulemine_core::{batch_stats, EventLog, Rule, RuleStats, Template};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{ClientError, LlmClient};
use crate::message::{Conversation, Message, Role};
use crate::outcome::{parse_outcome, validate, Diagnostic, LlmOutcome};
use crate::prompt::{build_prompt, PromptError};

/// One rejected LLM response and why it was rejected.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub response: String,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CycleOutcome {
    /// The LLM asked the expert a question.
    Clarification { text: String },
    /// Validated rules; `stats` is empty when no log was given.
    Rules {
        rules: Vec<Rule>,
        stats: Vec<RuleStats>,
    },
    /// Every allowed attempt produced unusable output.
    Failure,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleReport {
    pub outcome: CycleOutcome,
    pub invocations: usize,
    /// Responses that triggered an error message back to the LLM.
    pub error_cycles: usize,
    pub attempts: Vec<Attempt>,
}

#[derive(Debug, Error)]
pub enum CycleError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("LLM call {invocation} failed: {source}")]
    Client {
        source: ClientError,
        /// 1-based index of the failed call within this cycle.
        invocation: usize,
        error_cycles: usize,
    },
}

/// Sends `msg` and keeps correcting the LLM until it asks a question,
/// returns valid rules, or runs out of attempts.
///
/// The history records every completed exchange, so a client error leaves
/// the conversation consistent and resumable.
pub fn run_cycle(
    conv: &mut Conversation,
    client: &dyn LlmClient,
    msg: Message,
    log: Option<&EventLog>,
) -> Result<CycleReport, CycleError> {
    if msg.role == Role::DomainExpert {
        conv.reset_attempts();
    }
    let mut attempts = Vec::new();
    let mut invocations = 0;
    let mut next = msg;
    while conv.attempts_remaining() > 0 {
        let prompt = build_prompt(conv, &next)?;
        let reply = client
            .complete(&prompt)
            .map_err(|source| CycleError::Client {
                source,
                invocation: invocations + 1,
                error_cycles: attempts.len(),
            })?;
        invocations += 1;
        conv.consume_attempt();
        conv.record_exchange(next, Message::assistant(reply.clone()));

        let diagnostics = match parse_outcome(&reply) {
            LlmOutcome::Clarification { text } => {
                return Ok(report(
                    CycleOutcome::Clarification { text },
                    invocations,
                    attempts,
                ))
            }
            LlmOutcome::ExtractedRules { candidates } => {
                match validate(&candidates, conv.alphabet()) {
                    Ok(rules) => {
                        let stats = log
                            .map(|log| batch_stats(&rules, log).into_iter().flatten().collect())
                            .unwrap_or_default();
                        return Ok(report(
                            CycleOutcome::Rules { rules, stats },
                            invocations,
                            attempts,
                        ));
                    }
                    Err(d) => d,
                }
            }
            LlmOutcome::Invalid { diagnostics } => diagnostics,
        };
        next = Message::service(error_message(&diagnostics));
        attempts.push(Attempt {
            response: reply,
            diagnostics,
        });
    }
    Ok(report(CycleOutcome::Failure, invocations, attempts))
}

fn report(outcome: CycleOutcome, invocations: usize, attempts: Vec<Attempt>) -> CycleReport {
    CycleReport {
        outcome,
        invocations,
        error_cycles: attempts.len(),
        attempts,
    }
}

/// The service message describing what was wrong and where.
pub fn error_message(diagnostics: &[Diagnostic]) -> String {
    let mut text = String::from(
        "Your previous output could not be used. Fix the following problems and return the complete corrected JSON object only:",
    );
    for d in diagnostics {
        text.push_str("\n- ");
        text.push_str(&d.to_string());
    }
    if diagnostics
        .iter()
        .any(|d| d.reason.starts_with("unknown template"))
    {
        let names: Vec<&str> = Template::ALL.iter().map(|t| t.name()).collect();
        text.push_str(&format!("\nSupported templates: {}.", names.join(", ")));
    }
    text
}
