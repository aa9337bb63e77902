//! Recursive rule-guided discovery.
//!
//! Each step either recognises a base case or picks the cheapest binary cut
//! that no applicable rule forbids, splits the log along it and recurses on
//! both halves with the full rule set.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cut::{applicable, enumerate_cuts, violates, CostTerms, Cut};
use crate::declare::Rule;
use crate::dfg::Dfg;
use crate::log::{Activity, EventLog, Trace};
use crate::scalar::Scalar;
use crate::tree::{Operator, ProcessTree};

/// Largest step alphabet for which all cuts are enumerated.
pub const MAX_EXHAUSTIVE_ALPHABET: usize = 20;

/// What to do when the rules forbid every cut at some step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FallbackPolicy {
    /// Rank all cuts as if no rule applied and record a warning.
    #[default]
    WarnAndIgnoreRules,
    Abort,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryConfig<T> {
    pub sup: T,
    pub fallback: FallbackPolicy,
}

impl<T: Scalar> DiscoveryConfig<T> {
    pub fn new(sup: T) -> Result<Self, DiscoveryError> {
        if !(sup >= T::zero() && sup <= T::one()) {
            return Err(DiscoveryError::InvalidSup(sup.approx()));
        }
        Ok(DiscoveryConfig {
            sup,
            fallback: FallbackPolicy::default(),
        })
    }

    pub fn with_fallback(mut self, fallback: FallbackPolicy) -> Self {
        self.fallback = fallback;
        self
    }
}

impl Default for DiscoveryConfig<f64> {
    fn default() -> Self {
        DiscoveryConfig {
            sup: 0.2,
            fallback: FallbackPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiscoveryError {
    #[error("cannot discover a model from an empty log")]
    EmptyLog,
    #[error("sup must lie in [0, 1], got {0}")]
    InvalidSup(f64),
    #[error("no admissible cut over {{{}}}; blocking rules: {}", join(.alphabet), join(.rules))]
    NoAdmissibleCut {
        alphabet: Vec<Activity>,
        rules: Vec<Rule>,
    },
    #[error("step alphabet has {0} activities, more than the {MAX_EXHAUSTIVE_ALPHABET} supported")]
    AlphabetTooLarge(usize),
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// One cut-selection step of a discovery run.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub alphabet: BTreeSet<Activity>,
    pub chosen: Cut,
    pub candidates: usize,
    /// Cuts removed by the rules at this step.
    pub pruned: Vec<Cut>,
    /// Set when all cuts were pruned and the rules were ignored.
    pub fallback: bool,
    /// The cut that would have won without any rules, if different.
    pub unconstrained_choice: Option<Cut>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discovery {
    pub tree: ProcessTree,
    pub warnings: Vec<String>,
    pub steps: Vec<Step>,
}

/// Recognises logs over at most one activity.
pub fn check_base_case(log: &EventLog) -> Option<ProcessTree> {
    let alphabet = log.alphabet();
    match alphabet.len() {
        0 => Some(ProcessTree::Tau),
        1 => {
            let a = alphabet.iter().next().expect("one activity").clone();
            let repeated = log.traces().iter().any(|t| t.len() >= 2);
            let skippable = log.traces().iter().any(|t| t.is_empty());
            let mut tree = ProcessTree::Leaf(a);
            if repeated {
                tree = ProcessTree::looped(tree, ProcessTree::Tau);
            }
            if skippable {
                tree = ProcessTree::xor(ProcessTree::Tau, tree);
            }
            Some(tree)
        }
        _ => None,
    }
}

/// Splits a log along a cut.
///
/// * → and ∧ project every trace onto each block.
/// * × sends each trace, projected, to the block holding most of its events
///   (ties go left); events of the other block are dropped.
/// * ↻ cuts each trace into maximal runs of one block; left runs form the
///   body log and right runs the redo log. Empty traces go to the body log.
pub fn split_log(log: &EventLog, cut: &Cut) -> (EventLog, EventLog) {
    match cut.op {
        Operator::Sequence | Operator::Parallel => {
            (log.project(&cut.left), log.project(&cut.right))
        }
        Operator::Xor => {
            let mut left = Vec::new();
            let mut right = Vec::new();
            for trace in log.traces() {
                let in_left = trace.iter().filter(|a| cut.left.contains(*a)).count();
                let in_right = trace.iter().filter(|a| cut.right.contains(*a)).count();
                if in_left >= in_right {
                    left.push(trace.project(&cut.left));
                } else {
                    right.push(trace.project(&cut.right));
                }
            }
            (EventLog::new(left), EventLog::new(right))
        }
        Operator::Loop => {
            let mut body = Vec::new();
            let mut redo = Vec::new();
            for trace in log.traces() {
                if trace.is_empty() {
                    body.push(Trace::default());
                    continue;
                }
                let mut run: Vec<Activity> = Vec::new();
                let mut run_left = cut.left.contains(&trace[0]);
                for a in trace.iter() {
                    let is_left = cut.left.contains(a);
                    if is_left != run_left {
                        let done = Trace::new(std::mem::take(&mut run));
                        if run_left {
                            body.push(done)
                        } else {
                            redo.push(done)
                        }
                        run_left = is_left;
                    }
                    run.push(a.clone());
                }
                let done = Trace::new(run);
                if run_left {
                    body.push(done)
                } else {
                    redo.push(done)
                }
            }
            (EventLog::new(body), EventLog::new(redo))
        }
    }
}

/// Discovers a process tree from `log`, constrained by `rules`.
pub fn discover<T: Scalar>(
    log: &EventLog,
    rules: &[Rule],
    config: &DiscoveryConfig<T>,
) -> Result<Discovery, DiscoveryError> {
    if log.is_empty() {
        return Err(DiscoveryError::EmptyLog);
    }
    let sup = config.sup;
    if !(sup >= T::zero() && sup <= T::one()) {
        return Err(DiscoveryError::InvalidSup(sup.approx()));
    }
    let mut run = Run {
        rules,
        config,
        warnings: Vec::new(),
        steps: Vec::new(),
    };
    let tree = run.recurse(log, log.alphabet())?;
    Ok(Discovery {
        tree,
        warnings: run.warnings,
        steps: run.steps,
    })
}

struct Run<'a, T> {
    rules: &'a [Rule],
    config: &'a DiscoveryConfig<T>,
    warnings: Vec<String>,
    steps: Vec<Step>,
}

impl<T: Scalar> Run<'_, T> {
    fn recurse(
        &mut self,
        log: &EventLog,
        expected: &BTreeSet<Activity>,
    ) -> Result<ProcessTree, DiscoveryError> {
        let mut tree = match check_base_case(log) {
            Some(tree) => tree,
            None => self.step(log)?,
        };
        // Activities seen only as dropped minority events of an exclusive
        // choice are kept as optional, concurrent behaviour.
        for missing in expected.difference(log.alphabet()) {
            self.warnings.push(format!(
                "activity {missing} was only observed as noise in an exclusive choice; modelled as optional"
            ));
            let optional = ProcessTree::xor(ProcessTree::Tau, ProcessTree::Leaf(missing.clone()));
            tree = match tree {
                ProcessTree::Tau => optional,
                other => ProcessTree::par(other, optional),
            };
        }
        Ok(tree)
    }

    fn step(&mut self, log: &EventLog) -> Result<ProcessTree, DiscoveryError> {
        let alphabet = log.alphabet().clone();
        if alphabet.len() > MAX_EXHAUSTIVE_ALPHABET {
            return Err(DiscoveryError::AlphabetTooLarge(alphabet.len()));
        }
        let dfg = Dfg::build(log);
        let cuts = enumerate_cuts(&alphabet).expect("base case handles fewer than two activities");
        let active = applicable(self.rules, &alphabet);

        let mut allowed = Vec::new();
        let mut pruned = Vec::new();
        let mut blocking: BTreeSet<Rule> = BTreeSet::new();
        for (index, cut) in cuts.iter().enumerate() {
            let mut ok = true;
            for rule in &active {
                if violates(cut, rule).expect("applicable rules lie inside the cut") {
                    blocking.insert((*rule).clone());
                    ok = false;
                }
            }
            if ok {
                allowed.push(index);
            } else {
                pruned.push(cut.clone());
            }
        }

        let terms: Vec<CostTerms> = cuts.iter().map(|c| CostTerms::compute(&dfg, c)).collect();
        let all: Vec<usize> = (0..cuts.len()).collect();
        let unconstrained = self.best(&terms, &all);

        let mut fallback = false;
        let chosen = if allowed.is_empty() {
            let rules: Vec<Rule> = blocking.into_iter().collect();
            match self.config.fallback {
                FallbackPolicy::Abort => {
                    return Err(DiscoveryError::NoAdmissibleCut {
                        alphabet: alphabet.into_iter().collect(),
                        rules,
                    })
                }
                FallbackPolicy::WarnAndIgnoreRules => {
                    fallback = true;
                    self.warnings.push(format!(
                        "every cut over {{{}}} violates a rule; ignoring rules at this step: {}",
                        join(&alphabet.iter().collect::<Vec<_>>()),
                        join(&rules)
                    ));
                    unconstrained
                }
            }
        } else {
            self.best(&terms, &allowed)
        };

        let cut = cuts[chosen].clone();
        self.steps.push(Step {
            alphabet,
            chosen: cut.clone(),
            candidates: cuts.len(),
            pruned,
            fallback,
            unconstrained_choice: (unconstrained != chosen).then(|| cuts[unconstrained].clone()),
        });

        let (left_log, right_log) = split_log(log, &cut);
        let left = self.recurse(&left_log, &cut.left)?;
        let right = self.recurse(&right_log, &cut.right)?;
        Ok(ProcessTree::node(cut.op, left, right))
    }

    /// Lowest cost first; ties go to the cut with less missing behaviour,
    /// then to enumeration order (operator priority, then block order).
    fn best(&self, terms: &[CostTerms], candidates: &[usize]) -> usize {
        let sup = self.config.sup;
        let mut best = candidates[0];
        let mut best_cost = terms[best].weighted(sup);
        for &i in &candidates[1..] {
            let cost = terms[i].weighted(sup);
            let better =
                cost < best_cost || (cost == best_cost && terms[i].missing < terms[best].missing);
            if better {
                best = i;
                best_cost = cost;
            }
        }
        best
    }
}
