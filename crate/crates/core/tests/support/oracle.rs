//! Brute-force check of the cut pruning table.
//!
//! A cut `(op, left, right)` violates a rule iff every tree `op(M1, M2)` of
//! depth at most two (so `M1`, `M2` have depth at most one, use each of
//! their block's activities exactly once, and may use τ where a single
//! activity leaves room) has a trace of length ≤ 8 that violates the rule.

use std::collections::{BTreeMap, BTreeSet};

use rulemine_core::{evaluate_trace, Activity, Cut, Operator, ProcessTree, Rule, Template, Trace};

pub const MAX_TRACE_LEN: usize = 8;

/// One disagreement between the table and the enumeration.
#[derive(Debug)]
pub struct Mismatch {
    pub cut: Cut,
    pub rule: Rule,
    pub table: bool,
    pub brute_force: bool,
}

#[derive(Debug, Default)]
pub struct OracleReport {
    pub checked: usize,
    pub mismatches: Vec<Mismatch>,
}

fn act(s: &str) -> Activity {
    Activity::new(s).unwrap()
}

/// Depth ≤ 1 trees over `block` using every activity exactly once.
pub fn block_models(block: &[Activity]) -> Vec<ProcessTree> {
    let mut out = Vec::new();
    match block {
        [x] => {
            out.push(ProcessTree::Leaf(x.clone()));
            for op in Operator::ALL {
                out.push(ProcessTree::node(
                    op,
                    ProcessTree::Leaf(x.clone()),
                    ProcessTree::Tau,
                ));
                out.push(ProcessTree::node(
                    op,
                    ProcessTree::Tau,
                    ProcessTree::Leaf(x.clone()),
                ));
            }
        }
        [x, y] => {
            for op in Operator::ALL {
                out.push(ProcessTree::node(
                    op,
                    ProcessTree::Leaf(x.clone()),
                    ProcessTree::Leaf(y.clone()),
                ));
                out.push(ProcessTree::node(
                    op,
                    ProcessTree::Leaf(y.clone()),
                    ProcessTree::Leaf(x.clone()),
                ));
            }
        }
        _ => panic!("blocks hold one or two activities here"),
    }
    out
}

/// All rules over the alphabet: unary ones per activity, binary ones per
/// ordered pair of distinct activities.
pub fn all_rules(alphabet: &[Activity]) -> Vec<Rule> {
    let mut out = Vec::new();
    for template in Template::ALL {
        if template.arity() == 1 {
            for a in alphabet {
                out.push(Rule::new(template, vec![a.clone()]).unwrap());
            }
        } else {
            for a in alphabet {
                for b in alphabet {
                    if a != b {
                        out.push(Rule::new(template, vec![a.clone(), b.clone()]).unwrap());
                    }
                }
            }
        }
    }
    out
}

/// Every operator with every ordered bipartition of the alphabet.
pub fn all_cuts(alphabet: &[Activity]) -> Vec<Cut> {
    let n = alphabet.len();
    let mut out = Vec::new();
    for op in Operator::ALL {
        for mask in 1..(1u32 << n) - 1 {
            let left = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| alphabet[i].clone())
                .collect();
            let right = (0..n)
                .filter(|i| mask & (1 << i) == 0)
                .map(|i| alphabet[i].clone())
                .collect();
            out.push(Cut { op, left, right });
        }
    }
    out
}

fn violated_somewhere(language: &BTreeSet<Trace>, rule: &Rule) -> bool {
    language.iter().any(|t| evaluate_trace(rule, t).violated)
}

/// Brute-force verdicts for every rule on one cut.
pub fn brute_force(cut: &Cut, rules: &[Rule]) -> BTreeMap<Rule, bool> {
    let left: Vec<Activity> = cut.left.iter().cloned().collect();
    let right: Vec<Activity> = cut.right.iter().cloned().collect();
    let mut all_violate: BTreeMap<Rule, bool> = rules.iter().map(|r| (r.clone(), true)).collect();
    for m1 in block_models(&left) {
        for m2 in block_models(&right) {
            let model = ProcessTree::node(cut.op, m1.clone(), m2);
            assert!(model.depth() <= 2);
            let language = model.language(MAX_TRACE_LEN);
            for (rule, verdict) in all_violate.iter_mut() {
                if *verdict && !violated_somewhere(&language, rule) {
                    *verdict = false;
                }
            }
        }
    }
    all_violate
}

/// Compares `table` with brute force over alphabets of two and three
/// activities, every operator, every ordered bipartition and every rule.
pub fn check_table(table: impl Fn(&Cut, &Rule) -> bool) -> OracleReport {
    let mut report = OracleReport::default();
    for size in 2..=3 {
        let alphabet: Vec<Activity> = ["a", "b", "c"][..size].iter().map(|s| act(s)).collect();
        let rules = all_rules(&alphabet);
        for cut in all_cuts(&alphabet) {
            for (rule, brute) in brute_force(&cut, &rules) {
                let predicted = table(&cut, &rule);
                report.checked += 1;
                if predicted != brute {
                    report.mismatches.push(Mismatch {
                        cut: cut.clone(),
                        rule,
                        table: predicted,
                        brute_force: brute,
                    });
                }
            }
        }
    }
    report
}
