//! Classifying LLM responses and validating the rules they contain.

use std::collections::BTreeSet;
use std::fmt;

use rulemine_core::{Activity, RawRule, Rule, Template};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// A problem found in an LLM response. `index` points at the offending
/// record of the `constraints` array, when there is one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub index: Option<usize>,
    pub reason: String,
}

impl Diagnostic {
    fn at(index: usize, reason: impl Into<String>) -> Self {
        Diagnostic {
            index: Some(index),
            reason: reason.into(),
        }
    }

    fn whole(reason: impl Into<String>) -> Self {
        Diagnostic {
            index: None,
            reason: reason.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "constraint at index {i}: {}", self.reason),
            None => f.write_str(&self.reason),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LlmOutcome {
    Clarification { text: String },
    ExtractedRules { candidates: Vec<RawRule> },
    Invalid { diagnostics: Vec<Diagnostic> },
}

/// Routes a response: JSON with a `constraints` array becomes rules, other
/// prose is a question for the expert, and empty or broken JSON is invalid.
///
/// Text is treated as an attempt at JSON when it is fenced, starts with `{`,
/// or mentions `"constraints"`. Prose around an embedded object is dropped.
pub fn parse_outcome(response: &str) -> LlmOutcome {
    let trimmed = response.trim();
    if trimmed.is_empty() {
        return LlmOutcome::Invalid {
            diagnostics: vec![Diagnostic::whole("the response was empty")],
        };
    }
    let Some(candidate) = json_candidate(trimmed) else {
        return LlmOutcome::Clarification {
            text: trimmed.to_string(),
        };
    };
    let value: Value = match serde_json::from_str(candidate) {
        Ok(v) => v,
        Err(e) => {
            return LlmOutcome::Invalid {
                diagnostics: vec![Diagnostic::whole(format!(
                    "the output is not valid JSON ({e})"
                ))],
            }
        }
    };
    let Some(records) = value.get("constraints").and_then(Value::as_array) else {
        return LlmOutcome::Invalid {
            diagnostics: vec![Diagnostic::whole(
                "the JSON object has no \"constraints\" array",
            )],
        };
    };
    let mut candidates = Vec::with_capacity(records.len());
    let mut diagnostics = Vec::new();
    for (i, record) in records.iter().enumerate() {
        match serde_json::from_value::<RawRule>(record.clone()) {
            Ok(raw) => candidates.push(raw),
            Err(_) => diagnostics.push(Diagnostic::at(
                i,
                "expected an object with a string \"template\" and an array of strings \"activities\"",
            )),
        }
    }
    if diagnostics.is_empty() {
        LlmOutcome::ExtractedRules { candidates }
    } else {
        LlmOutcome::Invalid { diagnostics }
    }
}

fn json_candidate(text: &str) -> Option<&str> {
    if let Some(start) = text.find("```") {
        let body = &text[start + 3..];
        // Skip an info string such as `json`.
        let body = body.find('\n').map_or(body, |nl| &body[nl + 1..]);
        let end = body.find("```").unwrap_or(body.len());
        return Some(body[..end].trim());
    }
    if text.starts_with('{') {
        return Some(text);
    }
    if text.contains("\"constraints\"") {
        let start = text.find('{')?;
        let end = text.rfind('}').filter(|&e| e > start)?;
        return Some(&text[start..=end]);
    }
    None
}

/// Checks every record against the template list and the alphabet,
/// reporting all problems at once.
pub fn validate(
    candidates: &[RawRule],
    alphabet: &BTreeSet<Activity>,
) -> Result<Vec<Rule>, Vec<Diagnostic>> {
    let mut rules = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, raw) in candidates.iter().enumerate() {
        let before = diagnostics.len();
        let template = Template::from_name(&raw.template);
        match template {
            None => diagnostics.push(Diagnostic::at(
                i,
                format!("unknown template {:?}", raw.template),
            )),
            Some(t) if t.arity() != raw.activities.len() => diagnostics.push(Diagnostic::at(
                i,
                format!(
                    "arity mismatch: {} takes {} {}, got {}",
                    t,
                    t.arity(),
                    if t.arity() == 1 {
                        "activity"
                    } else {
                        "activities"
                    },
                    raw.activities.len()
                ),
            )),
            Some(_) => {}
        }
        for label in &raw.activities {
            if !alphabet.contains(label.as_str()) {
                diagnostics.push(Diagnostic::at(
                    i,
                    format!("unknown activity {label:?}: it is not present in the provided list"),
                ));
            }
        }
        if raw.activities.len() == 2 && raw.activities[0] == raw.activities[1] {
            diagnostics.push(Diagnostic::at(
                i,
                format!("activity {:?} appears twice", raw.activities[0]),
            ));
        }
        if diagnostics.len() == before {
            let rule = raw.to_rule().expect("record passed every check");
            if !rules.contains(&rule) {
                rules.push(rule);
            }
        }
    }
    if diagnostics.is_empty() {
        Ok(rules)
    } else {
        Err(diagnostics)
    }
}
