use rulemine_core::Fraction;
use rulemine_core::{Rule, RuleSet, Template};
use rulemine_llm::evaluation::select;
use rulemine_llm::{
    load_cases, paragraphs, run_suite, score, ClientError, EvalCase, EvalError, Granularity,
    LlmClient, Message, PromptVariant, ScriptedClient, SuiteOptions,
};

fn cases() -> Vec<EvalCase> {
    load_cases(include_str!("fixtures/cases.json")).unwrap()
}

/// Answers each case with its own ground truth.
struct Oracle(Vec<EvalCase>);

impl LlmClient for Oracle {
    fn complete(&self, prompt: &[Message]) -> Result<String, ClientError> {
        let text = &prompt.last().unwrap().text;
        let case = self.0.iter().find(|c| &c.text == text).expect("known case");
        Ok(serde_json::to_string(&RuleSet::from_rules(&case.ground_truth)).unwrap())
    }
}

fn rule(t: Template, a: &str, b: &str) -> Rule {
    Rule::binary(t, a, b).unwrap()
}

#[test]
fn fixture_loads() {
    let cases = cases();
    assert_eq!(cases.len(), 5);
    assert_eq!(cases[2].ground_truth.len(), 2);
}

#[test]
fn bad_ground_truth_is_rejected() {
    let json = r#"{"cases": [{"id": "x", "text": "t", "activities": ["a"], "granularity": "s2s",
        "constraints": [{"template": "Response", "activities": ["a", "b"]}]}]}"#;
    assert!(matches!(
        load_cases(json),
        Err(EvalError::GroundTruth { .. })
    ));
}

#[test]
fn oracle_client_scores_perfectly() {
    let cases = cases();
    for concurrency in [1, 4] {
        let options = SuiteOptions {
            concurrency,
            ..SuiteOptions::default()
        };
        let report = run_suite(&cases, &Oracle(cases.clone()), options);
        assert_eq!(report.recall, 1.0);
        assert_eq!(report.precision, 1.0);
        assert_eq!(report.error_rate, 0.0);
        assert_eq!(report.failure_rate, 0.0);
        assert_eq!(report.recall_exact(), Fraction::from_integer(1));
    }
}

#[test]
fn oracle_on_paragraphs() {
    let all = cases();
    let par = select(&all, Granularity::Par);
    assert_eq!(par.len(), 2);
    let report = run_suite(&par, &Oracle(par.clone()), SuiteOptions::default());
    assert_eq!((report.recall, report.precision), (1.0, 1.0));
}

#[test]
fn always_malformed_fails_every_case() {
    let cases = cases();
    let client = ScriptedClient::new(["{\"constraints\": ["]).repeating();
    let report = run_suite(&cases, &client, SuiteOptions::default());
    assert_eq!(report.failure_rate, 1.0);
    assert_eq!(report.error_rate, 1.0);
    assert_eq!(report.recall, 0.0);
    assert_eq!(report.precision, 0.0);
    assert_eq!(client.calls(), 10 * cases.len());
}

#[test]
fn exhausted_transcript_counts_as_failure() {
    let cases = cases();
    let truth = serde_json::to_string(&RuleSet::from_rules(&cases[0].ground_truth)).unwrap();
    let client = ScriptedClient::new([truth]);
    let report = run_suite(&cases, &client, SuiteOptions::default());
    assert!(!report.cases[0].failed);
    assert!(report.cases[1..]
        .iter()
        .all(|c| c.failed && c.client_error.is_some()));
    assert_eq!(report.failure_rate, 0.8);
}

#[test]
fn clarification_is_no_rules_but_no_failure() {
    let cases = cases();
    let client = ScriptedClient::new(["Which activity comes first?"]).repeating();
    let report = run_suite(&cases[..1], &client, SuiteOptions::default());
    assert_eq!(report.failure_rate, 0.0);
    assert_eq!(report.recall, 0.0);
    assert!(report.cases[0].clarification.is_some());
}

#[test]
fn paragraph_truth_is_union_of_sentences() {
    let all = cases();
    let par = paragraphs(&all);
    let claims = &par[0];
    assert_eq!(claims.id, "claims");
    assert_eq!(claims.granularity, Granularity::Par);
    let expected: Vec<Rule> = all[..3]
        .iter()
        .flat_map(|c| c.ground_truth.clone())
        .collect();
    assert_eq!(claims.ground_truth, expected);
    assert!(claims.text.starts_with(&all[0].text));
    assert!(claims.text.ends_with(&all[2].text));
}

#[test]
fn one_hit_one_miss_one_hallucination() {
    let r1 = rule(Template::Response, "a", "b");
    let r2 = rule(Template::Precedence, "a", "b");
    let r3 = rule(Template::CoExistence, "a", "b");
    let case = EvalCase {
        id: "x".into(),
        text: "t".into(),
        activities: ["a", "b"]
            .iter()
            .map(|l| rulemine_core::Activity::new(l).unwrap())
            .collect(),
        ground_truth: vec![r1.clone(), r2],
        granularity: Granularity::S2s,
        group: None,
    };
    let report = score(&[case], &[vec![r1, r3]], &[0], &[false]).unwrap();
    assert_eq!(report.recall_exact(), Fraction::new(1, 2));
    assert_eq!(report.precision_exact(), Fraction::new(1, 2));
}

fn case(id: &str, truth: Vec<Rule>) -> EvalCase {
    EvalCase {
        id: id.into(),
        text: id.into(),
        activities: ["a", "b", "c", "d"]
            .iter()
            .map(|l| rulemine_core::Activity::new(l).unwrap())
            .collect(),
        ground_truth: truth,
        granularity: Granularity::S2s,
        group: None,
    }
}

#[test]
fn micro_average_two_case_example() {
    // Case 1: 1 of 1 found. Case 2: 1 of 3 found, 2 hallucinated.
    // Micro: recall 2/4, precision 2/4. Macro would give recall 2/3.
    let g1 = rule(Template::Response, "a", "b");
    let g2 = rule(Template::Precedence, "a", "c");
    let g3 = rule(Template::CoExistence, "b", "c");
    let g4 = rule(Template::NotSuccession, "c", "d");
    let h1 = rule(Template::Response, "d", "a");
    let h2 = rule(Template::Response, "c", "a");
    let cases = [
        case("1", vec![g1.clone()]),
        case("2", vec![g2.clone(), g3, g4]),
    ];
    let extracted = [vec![g1], vec![g2, h1, h2]];
    let report = score(&cases, &extracted, &[0, 1], &[false, false]).unwrap();
    assert_eq!(report.recall_exact(), Fraction::new(1, 2));
    assert_eq!(report.precision_exact(), Fraction::new(1, 2));
    assert_eq!(report.error_rate_exact(), Fraction::new(1, 2));

    // Order of cases does not matter.
    let swapped = score(
        &[cases[1].clone(), cases[0].clone()],
        &[extracted[1].clone(), extracted[0].clone()],
        &[1, 0],
        &[false, false],
    )
    .unwrap();
    assert_eq!(swapped.recall, report.recall);
    assert_eq!(swapped.precision, report.precision);
}

#[test]
fn counting_rates() {
    let cases: Vec<EvalCase> = (0..10).map(|i| case(&i.to_string(), vec![])).collect();
    let extracted = vec![vec![]; 10];
    let mut cycles = vec![0; 10];
    cycles[3] = 2;
    cycles[7] = 10;
    let mut failures = vec![false; 10];
    failures[7] = true;
    let report = score(&cases, &extracted, &cycles, &failures).unwrap();
    assert_eq!(report.error_rate, 0.2);
    assert_eq!(report.failure_rate, 0.1);
    assert_eq!(report.precision, 0.0);
}

#[test]
fn misaligned_inputs_are_rejected() {
    let cases = [case("1", vec![])];
    assert!(matches!(
        score(&cases, &[], &[0], &[false]),
        Err(EvalError::Misaligned { .. })
    ));
}

#[test]
fn zero_shot_prompt_has_no_examples() {
    let cases = cases();
    let client = ScriptedClient::new(["{\"constraints\": []}"]);
    let options = SuiteOptions {
        variant: PromptVariant::ZeroShot,
        ..SuiteOptions::default()
    };
    run_suite(&cases[..1], &client, options);
    assert!(!client.prompts()[0][0].text.contains("# Examples"));
}
