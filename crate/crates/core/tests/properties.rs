use std::collections::BTreeSet;

use proptest::prelude::*;
use rulemine_core::{
    cut_cost, discover, enumerate_cuts, evaluate_trace, parse_csv, stats, Activity, Config,
    CostTerms, CsvConfig, Dfg, EventLog, ExactCost, Node, ProcessTree, Rule, Template, Trace,
};

const LABELS: [&str; 4] = ["a", "b", "c", "d"];

fn trace(max_len: usize) -> impl Strategy<Value = Trace> {
    prop::collection::vec(prop::sample::select(&LABELS[..]), 0..=max_len)
        .prop_map(|labels| Trace::from_labels(&labels))
}

fn log(max_traces: usize, max_len: usize) -> impl Strategy<Value = EventLog> {
    prop::collection::vec(trace(max_len), 1..=max_traces).prop_map(EventLog::new)
}

fn nonempty_log() -> impl Strategy<Value = EventLog> {
    log(6, 5).prop_filter("needs at least one event", |l| l.event_count() > 0)
}

fn rule() -> impl Strategy<Value = Rule> {
    (
        prop::sample::select(Template::ALL.to_vec()),
        prop::sample::select(&LABELS[..]),
        prop::sample::select(&LABELS[..]),
    )
        .prop_filter_map("binary rules need distinct activities", |(t, a, b)| {
            if t.arity() == 1 {
                Rule::unary(t, a).ok()
            } else {
                Rule::binary(t, a, b).ok()
            }
        })
}

proptest! {
    #[test]
    fn csv_round_trip(log in nonempty_log()) {
        // Empty traces have no rows and cannot survive CSV.
        let kept: EventLog = log.traces().iter().filter(|t| !t.is_empty()).cloned().collect();
        let parsed = parse_csv(log.to_csv().as_bytes(), &CsvConfig::default()).unwrap();
        prop_assert_eq!(parsed, kept);
    }

    #[test]
    fn dfg_conserves_flow(log in log(6, 6)) {
        let dfg = Dfg::build(&log);
        prop_assert_eq!(
            dfg.total_edges(),
            (log.event_count() + log.trace_count()) as u64
        );
        prop_assert_eq!(dfg.outgoing(&Node::Start), log.trace_count() as u64);
        prop_assert_eq!(dfg.incoming(&Node::End), log.trace_count() as u64);
        for a in dfg.activities() {
            let n = Node::Activity(a);
            prop_assert_eq!(dfg.incoming(&n), dfg.outgoing(&n));
            prop_assert_eq!(dfg.incoming(&n), dfg.frequency(&n));
        }
    }

    #[test]
    fn violation_implies_activation(rule in rule(), t in trace(8)) {
        let e = evaluate_trace(&rule, &t);
        prop_assert!(!e.violated || e.activated);
    }

    #[test]
    fn rules_on_absent_activities_are_vacuous(rule in rule(), t in trace(8)) {
        let absent = rule.activities().iter().all(|a| !t.contains(a));
        let e = evaluate_trace(&rule, &t);
        if absent {
            prop_assert_eq!(e.violated, rule.template() == Template::AtLeast1);
            prop_assert_eq!(e.activated, rule.template() == Template::AtLeast1);
        }
    }

    #[test]
    fn at_most_one_is_monotone(t in trace(6), extra in prop::sample::select(&LABELS[..])) {
        let rule = Rule::unary(Template::AtMost1, extra).unwrap();
        if evaluate_trace(&rule, &t).violated {
            let mut longer = t.to_vec();
            longer.push(Activity::new(extra).unwrap());
            prop_assert!(evaluate_trace(&rule, &Trace::new(longer)).violated);
        }
    }

    #[test]
    fn not_succession_breaks_on_concatenation(u in trace(4), v in trace(4)) {
        let rule = Rule::binary(Template::NotSuccession, "a", "b").unwrap();
        let a = Activity::new("a").unwrap();
        let b = Activity::new("b").unwrap();
        if u.contains(&a) && v.contains(&b) {
            let joined: Trace = u.iter().chain(v.iter()).cloned().collect();
            prop_assert!(evaluate_trace(&rule, &joined).violated);
        }
    }

    #[test]
    fn stats_ignore_multiplicity(rule in rule(), log in log(5, 5), k in 1usize..4) {
        let repeated: EventLog = log
            .traces()
            .iter()
            .flat_map(|t| std::iter::repeat_n(t.clone(), k))
            .collect();
        let once = stats(&rule, &log).unwrap();
        let many = stats(&rule, &repeated).unwrap();
        prop_assert_eq!(once.support(), many.support());
        prop_assert_eq!(once.confidence(), many.confidence());
    }

    #[test]
    fn sup_zero_cost_is_deviation(log in nonempty_log()) {
        let dfg = Dfg::build(&log);
        if log.alphabet().len() >= 2 {
            for cut in enumerate_cuts(log.alphabet()).unwrap() {
                let terms = CostTerms::compute(&dfg, &cut);
                let zero = cut_cost(&dfg, &cut, ExactCost::from_integer(0));
                let half = cut_cost(&dfg, &cut, ExactCost::new(1, 2));
                prop_assert_eq!(zero, ExactCost::from_integer(terms.deviation as i64));
                prop_assert!(zero <= half);
            }
        }
    }

    #[test]
    fn discovered_leaves_match_alphabet(log in nonempty_log(), rules in prop::collection::vec(rule(), 0..3)) {
        let first = discover(&log, &rules, &Config::default()).unwrap();
        let leaves: BTreeSet<Activity> = first.tree.leaves().into_iter().cloned().collect();
        prop_assert_eq!(&leaves, log.alphabet());
        let second = discover(&log, &rules, &Config::default()).unwrap();
        prop_assert_eq!(&first.tree, &second.tree);
        prop_assert_eq!(first.warnings, second.warnings);
        let reparsed = ProcessTree::parse_text(&first.tree.to_text()).unwrap();
        prop_assert_eq!(reparsed, first.tree);
    }
}
