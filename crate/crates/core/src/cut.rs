//! Binary cuts: enumeration, rule-based pruning, and cost.
//!
//! # Pruning table
//!
//! A cut violates a rule when every process tree `op(M1, M2)` with `M1`
//! over the left block and `M2` over the right block admits a trace breaking
//! the rule. "sep" means the rule's two activities sit in different blocks.
//!
//! | template           | →                 | ×    | ∧    | ↻                 |
//! |--------------------|-------------------|------|------|-------------------|
//! | AtLeast1(a)        |                   | yes  |      | a ∈ right         |
//! | AtMost1(a)         |                   |      |      | yes               |
//! | Response(a,b)      | a right, b left   | sep  | sep  | a left, b right   |
//! | Precedence(a,b)    | b left, a right   | sep  | sep  | b left, a right   |
//! | RespondedExist.    |                   | sep  |      | a left, b right   |
//! | CoExistence(a,b)   |                   | sep  |      | sep               |
//! | NotCoExistence(a,b)| sep               |      | sep  | yes               |
//! | NotSuccession(a,b) | a left, b right   |      | sep  | yes               |
//!
//! The two unconditional loop entries for `NotCoExistence` and
//! `NotSuccession` cover the case where both activities share a block: the
//! block is repeated, so one iteration can emit `a` and a later one `b`.
//! The table is checked exhaustively against brute-force enumeration of
//! small trees in `tests/pruning_oracle.rs`.
//!
//! # Cost
//!
//! `cost = deviation + sup · missing`, where deviation counts DFG edges that
//! contradict the operator and missing sums `min(freq(x), freq(y))` over
//! expected pairs `(x, y)` that have no `x → y` edge:
//!
//! | op | deviating edges             | expected pairs            |
//! |----|-----------------------------|---------------------------|
//! | →  | right → left                | left × right              |
//! | ×  | left ↔ right                | none                      |
//! | ∧  | none                        | left × right, right × left|
//! | ↻  | ▷ → right, right → □        | left × right, right × left|

use std::collections::BTreeSet;

use thiserror::Error;

use crate::declare::{Rule, Template};
use crate::dfg::{Dfg, Node};
use crate::log::Activity;
use crate::scalar::Scalar;
use crate::tree::Operator;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CutError {
    #[error("cuts need at least two activities, got {0}")]
    TooFewActivities(usize),
    #[error("rule {rule} mentions {activity}, which is outside the cut")]
    NotApplicable { rule: Rule, activity: Activity },
}

/// `(op, left, right)` with disjoint, non-empty blocks.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cut {
    pub op: Operator,
    pub left: BTreeSet<Activity>,
    pub right: BTreeSet<Activity>,
}

impl Cut {
    pub fn new(op: Operator, left: BTreeSet<Activity>, right: BTreeSet<Activity>) -> Self {
        debug_assert!(!left.is_empty() && !right.is_empty());
        debug_assert!(left.is_disjoint(&right));
        Cut { op, left, right }
    }

    /// Builds a cut from label slices; panics on invalid labels.
    pub fn from_labels(op: Operator, left: &[&str], right: &[&str]) -> Self {
        let set = |xs: &[&str]| {
            xs.iter()
                .map(|x| Activity::new(x).expect("valid activity label"))
                .collect()
        };
        Cut::new(op, set(left), set(right))
    }

    pub fn alphabet(&self) -> BTreeSet<Activity> {
        self.left.union(&self.right).cloned().collect()
    }

    fn side(&self, a: &Activity) -> Option<Side> {
        if self.left.contains(a) {
            Some(Side::Left)
        } else if self.right.contains(a) {
            Some(Side::Right)
        } else {
            None
        }
    }
}

impl std::fmt::Display for Cut {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let block =
            |s: &BTreeSet<Activity>| s.iter().map(|a| a.as_str()).collect::<Vec<_>>().join(", ");
        write!(
            f,
            "({}, {{{}}}, {{{}}})",
            self.op,
            block(&self.left),
            block(&self.right)
        )
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Left,
    Right,
}

/// Every binary cut over `sigma`, grouped by operator in priority order
/// (→, ×, ∧, ↻). Within an operator, blocks follow the bitmask order of the
/// sorted alphabet; for × and ∧ only the orientation with the smallest
/// activity on the left is produced.
pub fn enumerate_cuts(sigma: &BTreeSet<Activity>) -> Result<Vec<Cut>, CutError> {
    let n = sigma.len();
    if n < 2 {
        return Err(CutError::TooFewActivities(n));
    }
    assert!(n < 64, "alphabet too large for exhaustive cut enumeration");
    let items: Vec<&Activity> = sigma.iter().collect();
    let full: u64 = (1u64 << n) - 1;
    let split = |mask: u64| {
        let mut left = BTreeSet::new();
        let mut right = BTreeSet::new();
        for (i, a) in items.iter().enumerate() {
            if mask & (1 << i) != 0 {
                left.insert((*a).clone());
            } else {
                right.insert((*a).clone());
            }
        }
        (left, right)
    };
    let mut out = Vec::new();
    for op in Operator::ALL {
        for mask in 1..full {
            if op.is_commutative() && mask & 1 == 0 {
                continue;
            }
            let (left, right) = split(mask);
            out.push(Cut::new(op, left, right));
        }
    }
    Ok(out)
}

/// Whether `cut` violates `rule` according to the pruning table.
pub fn violates(cut: &Cut, rule: &Rule) -> Result<bool, CutError> {
    let sides = rule
        .activities()
        .iter()
        .map(|a| {
            cut.side(a).ok_or_else(|| CutError::NotApplicable {
                rule: rule.clone(),
                activity: a.clone(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let a = sides[0];
    let b = *sides.last().expect("non-empty");
    let sep = a != b;
    use Operator::*;
    use Side::*;
    Ok(match (rule.template(), cut.op) {
        (Template::AtLeast1, Xor) => true,
        (Template::AtLeast1, Loop) => a == Right,
        (Template::AtLeast1, _) => false,

        (Template::AtMost1, Loop) => true,
        (Template::AtMost1, _) => false,

        (Template::Response, Sequence) => a == Right && b == Left,
        (Template::Response, Xor | Parallel) => sep,
        (Template::Response, Loop) => a == Left && b == Right,

        (Template::Precedence, Sequence) => b == Left && a == Right,
        (Template::Precedence, Xor | Parallel) => sep,
        (Template::Precedence, Loop) => b == Left && a == Right,

        (Template::RespondedExistence, Xor) => sep,
        (Template::RespondedExistence, Loop) => a == Left && b == Right,
        (Template::RespondedExistence, _) => false,

        (Template::CoExistence, Xor | Loop) => sep,
        (Template::CoExistence, _) => false,

        (Template::NotCoExistence, Sequence | Parallel) => sep,
        (Template::NotCoExistence, Xor) => false,
        (Template::NotCoExistence, Loop) => true,

        (Template::NotSuccession, Sequence) => a == Left && b == Right,
        (Template::NotSuccession, Parallel) => sep,
        (Template::NotSuccession, Xor) => false,
        (Template::NotSuccession, Loop) => true,
    })
}

/// Rules whose activities all lie in `sigma`.
pub fn applicable<'a>(rules: &'a [Rule], sigma: &BTreeSet<Activity>) -> Vec<&'a Rule> {
    rules
        .iter()
        .filter(|r| r.activities().iter().all(|a| sigma.contains(a)))
        .collect()
}

/// Enumerated cuts over the DFG's activities that violate no applicable rule.
pub fn explore(dfg: &Dfg, rules: &[Rule]) -> Vec<Cut> {
    let sigma = dfg.activities();
    let Ok(cuts) = enumerate_cuts(&sigma) else {
        return Vec::new();
    };
    let active = applicable(rules, &sigma);
    cuts.into_iter()
        .filter(|c| {
            !active
                .iter()
                .any(|r| violates(c, r).expect("applicable rules lie inside the cut"))
        })
        .collect()
}

/// Deviation and missing-behaviour terms of a cut, before weighting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct CostTerms {
    pub deviation: u64,
    pub missing: u64,
}

impl CostTerms {
    pub fn compute(dfg: &Dfg, cut: &Cut) -> CostTerms {
        let left: Vec<Node> = cut.left.iter().cloned().map(Node::Activity).collect();
        let right: Vec<Node> = cut.right.iter().cloned().map(Node::Activity).collect();
        let sum_edges = |from: &[Node], to: &[Node]| -> u64 {
            from.iter()
                .flat_map(|x| to.iter().map(move |y| (x, y)))
                .map(|(x, y)| dfg.edge(x, y))
                .sum()
        };
        let missing_of = |from: &[Node], to: &[Node]| -> u64 {
            from.iter()
                .flat_map(|x| to.iter().map(move |y| (x, y)))
                .filter(|(x, y)| dfg.edge(x, y) == 0)
                .map(|(x, y)| dfg.frequency(x).min(dfg.frequency(y)))
                .sum()
        };
        match cut.op {
            Operator::Sequence => CostTerms {
                deviation: sum_edges(&right, &left),
                missing: missing_of(&left, &right),
            },
            Operator::Xor => CostTerms {
                deviation: sum_edges(&left, &right) + sum_edges(&right, &left),
                missing: 0,
            },
            Operator::Parallel => CostTerms {
                deviation: 0,
                missing: missing_of(&left, &right) + missing_of(&right, &left),
            },
            Operator::Loop => CostTerms {
                deviation: sum_edges(&[Node::Start], &right) + sum_edges(&right, &[Node::End]),
                missing: missing_of(&left, &right) + missing_of(&right, &left),
            },
        }
    }

    pub fn weighted<T: Scalar>(self, sup: T) -> T {
        T::from_count(self.deviation) + sup * T::from_count(self.missing)
    }
}

/// `deviation + sup · missing` for `cut` on `dfg`.
pub fn cut_cost<T: Scalar>(dfg: &Dfg, cut: &Cut, sup: T) -> T {
    CostTerms::compute(dfg, cut).weighted(sup)
}
