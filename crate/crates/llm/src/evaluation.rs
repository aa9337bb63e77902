//! Scoring extracted rules against hand-labelled ground truth.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use rulemine_core::{Activity, Fraction, RawRule, Rule};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::LlmClient;
use crate::cycle::{run_cycle, CycleError, CycleOutcome};
use crate::message::{Conversation, Message, DEFAULT_MAX_ATTEMPTS};
use crate::outcome::{validate, Diagnostic};
use crate::prompt::PromptVariant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    /// One sentence per prompt.
    S2s,
    /// A paragraph of several constraints per prompt.
    Par,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EvalCase {
    pub id: String,
    pub text: String,
    pub activities: BTreeSet<Activity>,
    pub ground_truth: Vec<Rule>,
    pub granularity: Granularity,
    /// Sentences sharing a group are concatenated into one paragraph case.
    pub group: Option<String>,
}

#[derive(Deserialize)]
struct CaseFile {
    cases: Vec<RawCase>,
}

#[derive(Deserialize)]
struct RawCase {
    id: String,
    text: String,
    activities: Vec<String>,
    constraints: Vec<RawRule>,
    granularity: Granularity,
    #[serde(default)]
    group: Option<String>,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot read cases: {0}")]
    Json(#[from] serde_json::Error),
    #[error("case {id}: invalid activity {label:?}")]
    Activity { id: String, label: String },
    #[error("case {id}: ground truth does not fit its activities: {}", join(.diagnostics))]
    GroundTruth {
        id: String,
        diagnostics: Vec<Diagnostic>,
    },
    #[error("inputs are misaligned: {cases} cases, {extracted} rule sets, {error_cycles} cycle counts, {failures} failure flags")]
    Misaligned {
        cases: usize,
        extracted: usize,
        error_cycles: usize,
        failures: usize,
    },
}

fn join(diagnostics: &[Diagnostic]) -> String {
    diagnostics
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Reads a case file: `{"cases": [{"id", "text", "activities",
/// "constraints", "granularity", "group"?}]}`.
pub fn load_cases(json: &str) -> Result<Vec<EvalCase>, EvalError> {
    let file: CaseFile = serde_json::from_str(json)?;
    file.cases
        .into_iter()
        .map(|raw| {
            let activities = raw
                .activities
                .iter()
                .map(|label| {
                    Activity::new(label).map_err(|_| EvalError::Activity {
                        id: raw.id.clone(),
                        label: label.clone(),
                    })
                })
                .collect::<Result<BTreeSet<_>, _>>()?;
            let ground_truth = validate(&raw.constraints, &activities).map_err(|diagnostics| {
                EvalError::GroundTruth {
                    id: raw.id.clone(),
                    diagnostics,
                }
            })?;
            Ok(EvalCase {
                id: raw.id,
                text: raw.text,
                activities,
                ground_truth,
                granularity: raw.granularity,
                group: raw.group,
            })
        })
        .collect()
}

/// Paragraph cases built by concatenating the sentence cases of each group,
/// in order of first appearance. The ground truth is the union.
pub fn paragraphs(cases: &[EvalCase]) -> Vec<EvalCase> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<&EvalCase>> = BTreeMap::new();
    for case in cases.iter().filter(|c| c.granularity == Granularity::S2s) {
        if let Some(g) = case.group.as_deref() {
            if !groups.contains_key(g) {
                order.push(g);
            }
            groups.entry(g).or_default().push(case);
        }
    }
    order
        .into_iter()
        .map(|g| {
            let members = &groups[g];
            let mut ground_truth: Vec<Rule> = Vec::new();
            for rule in members.iter().flat_map(|c| &c.ground_truth) {
                if !ground_truth.contains(rule) {
                    ground_truth.push(rule.clone());
                }
            }
            EvalCase {
                id: g.to_string(),
                text: members
                    .iter()
                    .map(|c| c.text.trim())
                    .collect::<Vec<_>>()
                    .join(" "),
                activities: members
                    .iter()
                    .flat_map(|c| c.activities.iter().cloned())
                    .collect(),
                ground_truth,
                granularity: Granularity::Par,
                group: Some(g.to_string()),
            }
        })
        .collect()
}

/// The cases to run at `granularity`. Paragraph cases come from the file when
/// it has any, otherwise they are assembled from sentence groups.
pub fn select(cases: &[EvalCase], granularity: Granularity) -> Vec<EvalCase> {
    let explicit: Vec<EvalCase> = cases
        .iter()
        .filter(|c| c.granularity == granularity)
        .cloned()
        .collect();
    if granularity == Granularity::Par && explicit.is_empty() {
        paragraphs(cases)
    } else {
        explicit
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CaseReport {
    pub id: String,
    pub ground_truth: Vec<Rule>,
    pub extracted: Vec<Rule>,
    pub hits: usize,
    pub error_cycles: usize,
    pub failed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clarification: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub client_error: Option<String>,
}

/// Micro-averaged extraction metrics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub recall: f64,
    pub precision: f64,
    pub error_rate: f64,
    pub failure_rate: f64,
    pub hits: u64,
    pub ground_truth_total: u64,
    pub extracted_total: u64,
    pub error_cases: u64,
    pub failed_cases: u64,
    pub case_count: u64,
    pub cases: Vec<CaseReport>,
}

/// `n / d`, or zero when both are zero.
fn ratio(n: u64, d: u64) -> Fraction {
    if d == 0 {
        Fraction::from_integer(0)
    } else {
        Fraction::new(n, d)
    }
}

fn to_f64(f: Fraction) -> f64 {
    *f.numer() as f64 / *f.denom() as f64
}

impl EvalReport {
    pub fn recall_exact(&self) -> Fraction {
        ratio(self.hits, self.ground_truth_total)
    }

    pub fn precision_exact(&self) -> Fraction {
        ratio(self.hits, self.extracted_total)
    }

    pub fn error_rate_exact(&self) -> Fraction {
        ratio(self.error_cases, self.case_count)
    }

    pub fn failure_rate_exact(&self) -> Fraction {
        ratio(self.failed_cases, self.case_count)
    }
}

/// Recall `Σ|GT∩LLM| / Σ|GT|`, precision `Σ|GT∩LLM| / Σ|LLM|`, and the share
/// of cases with at least one error cycle or a failure. Rules match only when
/// template and ordered activities are identical.
pub fn score(
    cases: &[EvalCase],
    extracted: &[Vec<Rule>],
    error_cycles: &[usize],
    failures: &[bool],
) -> Result<EvalReport, EvalError> {
    let n = cases.len();
    if extracted.len() != n || error_cycles.len() != n || failures.len() != n {
        return Err(EvalError::Misaligned {
            cases: n,
            extracted: extracted.len(),
            error_cycles: error_cycles.len(),
            failures: failures.len(),
        });
    }
    let mut reports = Vec::with_capacity(n);
    let (mut hits, mut gt_total, mut llm_total) = (0u64, 0u64, 0u64);
    for i in 0..n {
        let truth: BTreeSet<&Rule> = cases[i].ground_truth.iter().collect();
        let found: BTreeSet<&Rule> = extracted[i].iter().collect();
        let case_hits = truth.intersection(&found).count();
        hits += case_hits as u64;
        gt_total += truth.len() as u64;
        llm_total += found.len() as u64;
        reports.push(CaseReport {
            id: cases[i].id.clone(),
            ground_truth: cases[i].ground_truth.clone(),
            extracted: extracted[i].clone(),
            hits: case_hits,
            error_cycles: error_cycles[i],
            failed: failures[i],
            clarification: None,
            client_error: None,
        });
    }
    let error_cases = error_cycles.iter().filter(|&&c| c > 0).count() as u64;
    let failed_cases = failures.iter().filter(|&&f| f).count() as u64;
    let n = n as u64;
    Ok(EvalReport {
        recall: to_f64(ratio(hits, gt_total)),
        precision: to_f64(ratio(hits, llm_total)),
        error_rate: to_f64(ratio(error_cases, n)),
        failure_rate: to_f64(ratio(failed_cases, n)),
        hits,
        ground_truth_total: gt_total,
        extracted_total: llm_total,
        error_cases,
        failed_cases,
        case_count: n,
        cases: reports,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SuiteOptions {
    pub variant: PromptVariant,
    pub max_attempts: usize,
    /// Cases run at once. With 1, cases run in order, which scripted
    /// transcripts rely on.
    pub concurrency: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            variant: PromptVariant::FewShot,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            concurrency: 1,
        }
    }
}

struct CaseRun {
    extracted: Vec<Rule>,
    error_cycles: usize,
    failed: bool,
    clarification: Option<String>,
    client_error: Option<String>,
}

fn run_case(case: &EvalCase, client: &dyn LlmClient, options: &SuiteOptions) -> CaseRun {
    let mut conv = Conversation::new(case.activities.clone())
        .with_variant(options.variant)
        .with_max_attempts(options.max_attempts);
    let mut run = CaseRun {
        extracted: Vec::new(),
        error_cycles: 0,
        failed: false,
        clarification: None,
        client_error: None,
    };
    match run_cycle(&mut conv, client, Message::expert(case.text.clone()), None) {
        Ok(report) => {
            run.error_cycles = report.error_cycles;
            match report.outcome {
                CycleOutcome::Rules { rules, .. } => run.extracted = rules,
                // A question yields no rules but is not a failure.
                CycleOutcome::Clarification { text } => run.clarification = Some(text),
                CycleOutcome::Failure => run.failed = true,
            }
        }
        Err(e) => {
            if let CycleError::Client { error_cycles, .. } = &e {
                run.error_cycles = *error_cycles;
            }
            run.failed = true;
            run.client_error = Some(e.to_string());
        }
    }
    run
}

/// Runs every case as a fresh conversation and scores the results. Client
/// errors mark the affected case as failed; the suite carries on.
pub fn run_suite(cases: &[EvalCase], client: &dyn LlmClient, options: SuiteOptions) -> EvalReport {
    let runs: Vec<CaseRun> = if options.concurrency <= 1 {
        cases
            .iter()
            .map(|c| run_case(c, client, &options))
            .collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.concurrency)
            .build()
            .expect("thread pool");
        pool.install(|| {
            cases
                .par_iter()
                .map(|c| run_case(c, client, &options))
                .collect()
        })
    };
    let extracted: Vec<Vec<Rule>> = runs.iter().map(|r| r.extracted.clone()).collect();
    let cycles: Vec<usize> = runs.iter().map(|r| r.error_cycles).collect();
    let failures: Vec<bool> = runs.iter().map(|r| r.failed).collect();
    let mut report = score(cases, &extracted, &cycles, &failures).expect("aligned by construction");
    for (case, run) in report.cases.iter_mut().zip(runs) {
        case.clarification = run.clarification;
        case.client_error = run.client_error;
    }
    report
}
