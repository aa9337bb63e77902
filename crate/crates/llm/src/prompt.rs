//! Prompt assembly: task description, activity list, selected rules,
//! history, then the new message.

use std::collections::BTreeSet;

use rulemine_core::{Activity, Rule};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::message::{Conversation, Message, Role};

const TASK_DESCRIPTION: &str = include_str!("../assets/task_description_v1.md");

/// Version tag of the bundled task description.
pub const TASK_DESCRIPTION_VERSION: &str = "v1";

pub const ACTIVITIES_HEADER: &str = "The list of activities used in this process are the following. Please only use these activities to generate constraints:";

pub const RULES_HEADER: &str = "So far, the user has selected the following rules:";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptVariant {
    /// Full description, including the instruction to ask questions.
    #[default]
    Interactive,
    /// No clarification instruction; examples kept.
    FewShot,
    /// No clarification instruction and no examples.
    ZeroShot,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("no activities known; load an event log first")]
    EmptyAlphabet,
    #[error("only domain-expert or service messages can start an exchange, got {0}")]
    WrongRole(Role),
}

/// The task description for `variant`, with the optional sections
/// (`[[clarify]]`, `[[examples]]`) kept or dropped.
pub fn task_description(variant: PromptVariant) -> String {
    let keep_clarify = variant == PromptVariant::Interactive;
    let keep_examples = variant != PromptVariant::ZeroShot;
    let mut out = String::new();
    let mut keep = true;
    for line in TASK_DESCRIPTION.lines() {
        match line.trim() {
            "[[clarify]]" => keep = keep_clarify,
            "[[examples]]" => keep = keep_examples,
            "[[/clarify]]" | "[[/examples]]" => keep = true,
            _ if keep => {
                out.push_str(line);
                out.push('\n');
            }
            _ => {}
        }
    }
    out.trim_end().to_string()
}

pub fn activities_report(alphabet: &BTreeSet<Activity>) -> String {
    let mut text = String::from(ACTIVITIES_HEADER);
    for a in alphabet {
        text.push_str("\n- ");
        text.push_str(a.as_str());
    }
    text
}

pub fn rules_report<'a>(rules: impl IntoIterator<Item = &'a Rule>) -> String {
    let set = rulemine_core::RuleSet::from_rules(rules);
    format!(
        "{RULES_HEADER}\n{}",
        serde_json::to_string(&set).expect("rule sets always serialize")
    )
}

/// `⟨M0, ML, MR⟩ · history · ⟨new_msg⟩`, with MR left out when nothing is
/// selected.
pub fn build_prompt(conv: &Conversation, new_msg: &Message) -> Result<Vec<Message>, PromptError> {
    if new_msg.role == Role::Assistant {
        return Err(PromptError::WrongRole(new_msg.role));
    }
    if conv.alphabet().is_empty() {
        return Err(PromptError::EmptyAlphabet);
    }
    let mut prompt = Vec::with_capacity(conv.history().len() + 4);
    prompt.push(Message::service(task_description(conv.variant)));
    prompt.push(Message::service(activities_report(conv.alphabet())));
    if !conv.selected_rules.is_empty() {
        prompt.push(Message::service(rules_report(&conv.selected_rules)));
    }
    prompt.extend(conv.history().iter().cloned());
    prompt.push(new_msg.clone());
    Ok(prompt)
}
