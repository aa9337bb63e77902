//! Declare templates, rule semantics on single traces, and log statistics.
//!
//! A trace *violates* a rule when the template's condition is broken, and
//! *activates* it when the rule is non-vacuous on that trace. A trace counts
//! as *satisfying* a rule only when it is activated and not violated.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log::{Activity, EventLog, LogError, Trace};
use crate::Fraction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Template {
    AtMost1,
    AtLeast1,
    Response,
    Precedence,
    RespondedExistence,
    CoExistence,
    NotCoExistence,
    NotSuccession,
}

impl Template {
    pub const ALL: [Template; 8] = [
        Template::AtMost1,
        Template::AtLeast1,
        Template::Response,
        Template::Precedence,
        Template::RespondedExistence,
        Template::CoExistence,
        Template::NotCoExistence,
        Template::NotSuccession,
    ];

    pub fn arity(self) -> usize {
        match self {
            Template::AtMost1 | Template::AtLeast1 => 1,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Template::AtMost1 => "AtMost1",
            Template::AtLeast1 => "AtLeast1",
            Template::Response => "Response",
            Template::Precedence => "Precedence",
            Template::RespondedExistence => "RespondedExistence",
            Template::CoExistence => "CoExistence",
            Template::NotCoExistence => "NotCoExistence",
            Template::NotSuccession => "NotSuccession",
        }
    }

    /// Exact, case-sensitive lookup.
    pub fn from_name(name: &str) -> Option<Template> {
        Template::ALL.into_iter().find(|t| t.name() == name)
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("template {template} expects {expected} activities, got {actual}")]
    Arity {
        template: Template,
        expected: usize,
        actual: usize,
    },
    #[error("template {0} needs two distinct activities")]
    SameActivity(Template),
    #[error("invalid activity: {0}")]
    Activity(#[from] LogError),
    #[error("cannot parse rule literal {0:?}")]
    Syntax(String),
}

/// A template instantiated with concrete activities.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rule {
    template: Template,
    activities: Vec<Activity>,
}

impl Rule {
    pub fn new(template: Template, activities: Vec<Activity>) -> Result<Self, RuleError> {
        if activities.len() != template.arity() {
            return Err(RuleError::Arity {
                template,
                expected: template.arity(),
                actual: activities.len(),
            });
        }
        if activities.len() == 2 && activities[0] == activities[1] {
            return Err(RuleError::SameActivity(template));
        }
        Ok(Rule {
            template,
            activities,
        })
    }

    pub fn unary(template: Template, a: &str) -> Result<Self, RuleError> {
        Rule::new(template, vec![Activity::new(a)?])
    }

    pub fn binary(template: Template, a: &str, b: &str) -> Result<Self, RuleError> {
        Rule::new(template, vec![Activity::new(a)?, Activity::new(b)?])
    }

    pub fn template(&self) -> Template {
        self.template
    }

    pub fn activities(&self) -> &[Activity] {
        &self.activities
    }

    pub fn first(&self) -> &Activity {
        &self.activities[0]
    }

    /// Second activity of a binary rule; the first one for unary rules.
    pub fn second(&self) -> &Activity {
        self.activities
            .last()
            .expect("rules have at least one activity")
    }

    pub fn to_raw(&self) -> RawRule {
        RawRule {
            template: self.template.name().to_string(),
            activities: self.activities.iter().map(|a| a.to_string()).collect(),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.template)?;
        for (i, a) in self.activities.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

/// Parses the `Template(a, b)` literal form produced by `Display`.
impl FromStr for Rule {
    type Err = RuleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let syntax = || RuleError::Syntax(s.to_string());
        let open = s.find('(').ok_or_else(syntax)?;
        let inner = s[open + 1..].strip_suffix(')').ok_or_else(syntax)?;
        let name = s[..open].trim();
        let template = Template::from_name(name)
            .ok_or_else(|| RuleError::UnknownTemplate(name.to_string()))?;
        let activities = inner
            .split(',')
            .map(Activity::new)
            .collect::<Result<Vec<_>, _>>()?;
        Rule::new(template, activities)
    }
}

impl Serialize for Rule {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_raw().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Rule {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        RawRule::deserialize(deserializer)?
            .to_rule()
            .map_err(serde::de::Error::custom)
    }
}

/// One record of the rule interchange format, before validation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRule {
    pub template: String,
    pub activities: Vec<String>,
}

impl RawRule {
    pub fn to_rule(&self) -> Result<Rule, RuleError> {
        let template = Template::from_name(&self.template)
            .ok_or_else(|| RuleError::UnknownTemplate(self.template.clone()))?;
        let activities = self
            .activities
            .iter()
            .map(|a| Activity::new(a))
            .collect::<Result<Vec<_>, _>>()?;
        Rule::new(template, activities)
    }
}

/// The rule interchange document: `{"constraints": [...]}`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSet {
    pub constraints: Vec<RawRule>,
}

impl RuleSet {
    pub fn from_rules<'a, I: IntoIterator<Item = &'a Rule>>(rules: I) -> Self {
        RuleSet {
            constraints: rules.into_iter().map(Rule::to_raw).collect(),
        }
    }

    /// Converts every record, failing on the first invalid one.
    pub fn to_rules(&self) -> Result<Vec<Rule>, RuleError> {
        self.constraints.iter().map(RawRule::to_rule).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Evaluation {
    pub activated: bool,
    pub violated: bool,
}

impl Evaluation {
    pub fn satisfied(self) -> bool {
        self.activated && !self.violated
    }
}

fn positions<'t>(trace: &'t Trace, a: &'t Activity) -> impl Iterator<Item = usize> + 't {
    trace
        .iter()
        .enumerate()
        .filter(move |(_, x)| *x == a)
        .map(|(i, _)| i)
}

/// Activation and violation of `rule` on one trace.
pub fn evaluate_trace(rule: &Rule, trace: &Trace) -> Evaluation {
    let a = rule.first();
    let b = rule.second();
    let count_a = positions(trace, a).count();
    let has_a = count_a > 0;
    let has_b = trace.contains(b);
    let (activated, violated) = match rule.template {
        Template::AtMost1 => (has_a, count_a >= 2),
        Template::AtLeast1 => (true, !has_a),
        Template::Response => {
            let last_b = trace.iter().rposition(|x| x == b);
            let last_a = trace.iter().rposition(|x| x == a);
            let violated = match (last_a, last_b) {
                (Some(ia), Some(ib)) => ia > ib,
                (Some(_), None) => true,
                _ => false,
            };
            (has_a, violated)
        }
        Template::Precedence => {
            let first_a = trace.iter().position(|x| x == a);
            let first_b = trace.iter().position(|x| x == b);
            let violated = match (first_a, first_b) {
                (Some(ia), Some(ib)) => ib < ia,
                (None, Some(_)) => true,
                _ => false,
            };
            (has_b, violated)
        }
        Template::RespondedExistence => (has_a, has_a && !has_b),
        Template::CoExistence => (has_a || has_b, has_a != has_b),
        Template::NotCoExistence => (has_a || has_b, has_a && has_b),
        Template::NotSuccession => {
            let violated = match (
                trace.iter().position(|x| x == a),
                trace.iter().rposition(|x| x == b),
            ) {
                (Some(ia), Some(ib)) => ib > ia,
                _ => false,
            };
            (has_a, violated)
        }
    };
    Evaluation {
        activated,
        violated,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("statistics are undefined on an empty log")]
    EmptyLog,
}

/// Support and confidence of one rule over a log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleStats {
    pub rule: Rule,
    pub activated: u64,
    pub satisfied: u64,
    pub traces: u64,
}

impl RuleStats {
    /// `satisfied / traces`.
    pub fn support(&self) -> Fraction {
        Fraction::new(self.satisfied, self.traces)
    }

    /// `satisfied / max(1, activated)`.
    pub fn confidence(&self) -> Fraction {
        Fraction::new(self.satisfied, self.activated.max(1))
    }

    pub fn support_f64(&self) -> f64 {
        self.satisfied as f64 / self.traces as f64
    }

    pub fn confidence_f64(&self) -> f64 {
        self.satisfied as f64 / self.activated.max(1) as f64
    }

    /// Tab-separated report line with four-decimal ratios.
    pub fn report_line(&self) -> String {
        format!(
            "{}\tsupport={:.4}\tconfidence={:.4}",
            self.rule,
            self.support_f64(),
            self.confidence_f64()
        )
    }
}

/// Counts activations and satisfactions over every trace, respecting
/// multiplicities.
pub fn stats(rule: &Rule, log: &EventLog) -> Result<RuleStats, StatsError> {
    if log.is_empty() {
        return Err(StatsError::EmptyLog);
    }
    let mut activated = 0;
    let mut satisfied = 0;
    for trace in log.traces() {
        let ev = evaluate_trace(rule, trace);
        activated += u64::from(ev.activated);
        satisfied += u64::from(ev.satisfied());
    }
    Ok(RuleStats {
        rule: rule.clone(),
        activated,
        satisfied,
        traces: log.trace_count() as u64,
    })
}

/// Element-wise [`stats`], preserving input order.
pub fn batch_stats(rules: &[Rule], log: &EventLog) -> Vec<Result<RuleStats, StatsError>> {
    rules.iter().map(|r| stats(r, log)).collect()
}

/// Activities mentioned by any of the rules.
pub fn rule_activities<'a, I: IntoIterator<Item = &'a Rule>>(rules: I) -> BTreeSet<Activity> {
    rules
        .into_iter()
        .flat_map(|r| r.activities().iter().cloned())
        .collect()
}
