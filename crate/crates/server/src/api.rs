//! HTTP routes. Every session response carries the warnings raised since
//! they were last handed out; only mutating requests clear them.

use std::collections::BTreeSet;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use rulemine_core::{
    discover, Activity, CsvConfig, DiscoveryConfig, DiscoveryError, FallbackPolicy, RawRule, Rule,
    RuleSet, RuleStats,
};
use rulemine_llm::{
    run_cycle, validate, Attempt, Conversation, CycleError, CycleOutcome, Diagnostic, Message,
    PromptVariant, DEFAULT_MAX_ATTEMPTS,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::store::{
    load_log, new_id, AppState, ClientSpec, LogFormat, ModelRecord, Session, SessionSlot, StoredLog,
};

pub const DEFAULT_SUP: f64 = 0.2;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/logs", post(upload_log))
        .route("/logs/{id}", get(get_log))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/rules", get(get_rules))
        .route("/sessions/{id}/selection", put(put_selection))
        .route("/sessions/{id}/discover", post(run_discovery))
        .route("/sessions/{id}/model", get(get_model))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: json!({ "error": message.into() }),
        }
    }

    fn with(mut self, key: &str, value: impl Serialize) -> Self {
        self.body[key] = serde_json::to_value(value).expect("serializable");
        self
    }

    fn not_found(what: &str, id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, format!("unknown {what} {id}"))
    }

    fn busy() -> Self {
        ApiError::new(
            StatusCode::CONFLICT,
            "session is busy with another request; retry later",
        )
        .with("retry", true)
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn healthz() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LogSummary {
    pub id: String,
    pub alphabet: Vec<String>,
    pub traces: usize,
    pub events: usize,
    pub skipped_events: usize,
}

impl LogSummary {
    fn of(stored: &StoredLog) -> Self {
        LogSummary {
            id: stored.id.clone(),
            alphabet: stored
                .log
                .alphabet()
                .iter()
                .map(|a| a.to_string())
                .collect(),
            traces: stored.log.trace_count(),
            events: stored.log.event_count(),
            skipped_events: stored.skipped_events,
        }
    }
}

#[derive(Debug, Deserialize)]
struct UploadQuery {
    format: Option<LogFormat>,
    case_column: Option<String>,
    activity_column: Option<String>,
    timestamp_column: Option<String>,
}

/// The body is the raw file. `?format=csv|xes` picks the parser; without
/// it, XML-looking content is read as XES.
async fn upload_log(
    State(app): State<Arc<AppState>>,
    Query(q): Query<UploadQuery>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<LogSummary>)> {
    let format = q.format.unwrap_or_else(|| LogFormat::sniff(&body));
    let mut csv = CsvConfig::default();
    if let Some(c) = q.case_column {
        csv.case_column = c;
    }
    if let Some(c) = q.activity_column {
        csv.activity_column = c;
    }
    if let Some(c) = q.timestamp_column {
        csv.timestamp_column = Some(c);
    }
    let (log, skipped) = load_log(&body, format, &csv)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let stored = app.insert_log(log, skipped).map_err(ApiError::internal)?;
    Ok((StatusCode::CREATED, Json(LogSummary::of(&stored))))
}

async fn get_log(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<LogSummary>> {
    let stored = app
        .log(&id)
        .ok_or_else(|| ApiError::not_found("log", &id))?;
    Ok(Json(LogSummary::of(&stored)))
}

#[derive(Debug, Deserialize)]
struct CreateSession {
    log_id: String,
    client: ClientSpec,
    #[serde(default)]
    prompt_variant: PromptVariant,
    #[serde(default)]
    max_attempts: Option<usize>,
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    Json(req): Json<CreateSession>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let log = app
        .log(&req.log_id)
        .ok_or_else(|| ApiError::not_found("log", &req.log_id))?;
    let client = req
        .client
        .build()
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let conversation = Conversation::new(log.log.alphabet().clone())
        .with_variant(req.prompt_variant)
        .with_max_attempts(req.max_attempts.unwrap_or(DEFAULT_MAX_ATTEMPTS));
    let session = Session::new(new_id("session"), &log, conversation, req.client, client);
    let id = session.id.clone();
    app.insert_session(session).map_err(ApiError::internal)?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "id": id, "log_id": log.id })),
    ))
}

fn slot(app: &AppState, id: &str) -> ApiResult<SessionSlot> {
    app.session(id)
        .ok_or_else(|| ApiError::not_found("session", id))
}

fn lock(slot: SessionSlot) -> ApiResult<tokio::sync::OwnedMutexGuard<Session>> {
    slot.try_lock_owned().map_err(|_| ApiError::busy())
}

fn session_log(app: &AppState, session: &Session) -> ApiResult<Arc<StoredLog>> {
    app.log(&session.log_id)
        .ok_or_else(|| ApiError::internal(format!("log {} is missing", session.log_id)))
}

/// One row of the rules table.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct RuleRow {
    pub index: usize,
    pub rule: String,
    pub template: String,
    pub activities: Vec<String>,
    pub support: f64,
    pub confidence: f64,
    pub support_fraction: String,
    pub confidence_fraction: String,
    pub activated: u64,
    pub satisfied: u64,
    pub traces: u64,
    pub selected: bool,
}

fn rows(stats: &[RuleStats], selected: &[Rule]) -> Vec<RuleRow> {
    stats
        .iter()
        .enumerate()
        .map(|(index, s)| {
            let raw = s.rule.to_raw();
            RuleRow {
                index,
                rule: s.rule.to_string(),
                template: raw.template,
                activities: raw.activities,
                support: s.support_f64(),
                confidence: s.confidence_f64(),
                support_fraction: s.support().to_string(),
                confidence_fraction: s.confidence().to_string(),
                activated: s.activated,
                satisfied: s.satisfied,
                traces: s.traces,
                selected: selected.contains(&s.rule),
            }
        })
        .collect()
}

fn raw_rules(rules: &[Rule]) -> Vec<RawRule> {
    rules.iter().map(Rule::to_raw).collect()
}

async fn get_session(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let session = lock(slot(&app, &id)?)?;
    Ok(Json(json!({
        "id": session.id,
        "log_id": session.log_id,
        "prompt_variant": session.conversation.variant,
        "history": session.conversation.history(),
        "rules": rows(&session.rules, &session.selected),
        "selected": raw_rules(&session.selected),
        "model_id": session.model.as_ref().map(|m| m.id.clone()),
        "warnings": session.pending_warnings,
    })))
}

#[derive(Debug, Deserialize)]
struct PostMessage {
    text: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    Clarification,
    Rules,
    Failure,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MessageResponse {
    pub outcome: OutcomeKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub rules: Vec<RuleRow>,
    pub invocations: usize,
    pub error_cycles: usize,
    /// Rejected responses and their diagnostics, oldest first.
    pub attempts: Vec<Attempt>,
    pub warnings: Vec<String>,
}

async fn post_message(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<PostMessage>,
) -> ApiResult<Json<MessageResponse>> {
    if req.text.trim().is_empty() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "message text is empty",
        ));
    }
    let mut session = lock(slot(&app, &id)?)?;
    let log = session_log(&app, &session)?;
    let (mut session, result) = tokio::task::spawn_blocking(move || {
        let client = session.client.clone();
        let result = run_cycle(
            &mut session.conversation,
            client.as_ref(),
            Message::expert(req.text),
            Some(&log.log),
        );
        (session, result)
    })
    .await
    .map_err(ApiError::internal)?;

    let report = match result {
        Ok(report) => report,
        Err(e) => {
            // Completed exchanges are already in the history; keep them.
            app.persist(&session).map_err(ApiError::internal)?;
            let retryable =
                matches!(&e, CycleError::Client { source, .. } if source.is_retryable());
            return Err(ApiError::new(StatusCode::BAD_GATEWAY, e.to_string())
                .with("retryable", retryable)
                .with("warnings", session.take_warnings()));
        }
    };
    let (outcome, text) = match report.outcome {
        CycleOutcome::Clarification { text } => (OutcomeKind::Clarification, Some(text)),
        CycleOutcome::Rules { rules, stats } => {
            session.presented.extend(rules);
            session.rules = stats;
            (OutcomeKind::Rules, None)
        }
        CycleOutcome::Failure => {
            session.pending_warnings.push(format!(
                "no usable rules after {} attempts",
                report.invocations
            ));
            (OutcomeKind::Failure, None)
        }
    };
    let rules = match outcome {
        OutcomeKind::Rules => rows(&session.rules, &session.selected),
        _ => Vec::new(),
    };
    app.persist(&session).map_err(ApiError::internal)?;
    Ok(Json(MessageResponse {
        outcome,
        text,
        rules,
        invocations: report.invocations,
        error_cycles: report.error_cycles,
        attempts: report.attempts,
        warnings: session.take_warnings(),
    }))
}

async fn get_rules(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let session = lock(slot(&app, &id)?)?;
    Ok(Json(json!({
        "rules": rows(&session.rules, &session.selected),
        "selected": raw_rules(&session.selected),
        "warnings": session.pending_warnings,
    })))
}

/// A rule given either as a literal like `Response(a, b)` or as a record.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RuleRef {
    Literal(String),
    Record(RawRule),
}

#[derive(Debug, Deserialize)]
struct Selection {
    #[serde(default)]
    indices: Vec<usize>,
    #[serde(default)]
    rules: Vec<RuleRef>,
}

async fn put_selection(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<Selection>,
) -> ApiResult<Json<Value>> {
    let mut session = lock(slot(&app, &id)?)?;
    let log = session_log(&app, &session)?;
    let mut diagnostics: Vec<Diagnostic> = Vec::new();
    let mut chosen: Vec<Rule> = Vec::new();
    for &i in &req.indices {
        match session.rules.get(i) {
            Some(s) => chosen.push(s.rule.clone()),
            None => diagnostics.push(Diagnostic {
                index: Some(i),
                reason: format!(
                    "no rule at index {i}; {} rules are listed",
                    session.rules.len()
                ),
            }),
        }
    }
    let records: Vec<RawRule> = req
        .rules
        .into_iter()
        .map(|r| match r {
            RuleRef::Record(raw) => raw,
            RuleRef::Literal(text) => match text.parse::<Rule>() {
                Ok(rule) => rule.to_raw(),
                // Let validation report it as an unknown template.
                Err(_) => RawRule {
                    template: text,
                    activities: Vec::new(),
                },
            },
        })
        .collect();
    match validate(&records, log.log.alphabet()) {
        Ok(rules) => chosen.extend(rules),
        Err(d) => diagnostics.extend(d.into_iter().map(|mut d| {
            d.reason = format!("manual rule: {}", d.reason);
            d
        })),
    }
    if !diagnostics.is_empty() {
        return Err(
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid selection")
                .with("diagnostics", diagnostics),
        );
    }
    let mut seen = BTreeSet::new();
    chosen.retain(|r| seen.insert(r.clone()));
    session.set_selection(chosen);
    app.persist(&session).map_err(ApiError::internal)?;
    Ok(Json(json!({
        "selected": raw_rules(&session.selected),
        "warnings": session.take_warnings(),
    })))
}

#[derive(Debug, Default, Deserialize)]
struct DiscoverRequest {
    sup: Option<f64>,
    #[serde(default)]
    fallback: FallbackPolicy,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelResponse {
    pub model_id: String,
    pub sup: f64,
    pub rules: Vec<RawRule>,
    pub text: String,
    pub json: Value,
    pub dot: String,
    pub warnings: Vec<String>,
}

async fn run_discovery(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Option<Json<DiscoverRequest>>,
) -> ApiResult<Json<ModelResponse>> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let sup = req.sup.unwrap_or(DEFAULT_SUP);
    let config = DiscoveryConfig::new(sup)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?
        .with_fallback(req.fallback);
    let mut session = lock(slot(&app, &id)?)?;
    let log = session_log(&app, &session)?;
    let rules = session.selected.clone();
    let task_rules = rules.clone();
    let result = tokio::task::spawn_blocking(move || discover(&log.log, &task_rules, &config))
        .await
        .map_err(ApiError::internal)?;
    let discovery = result.map_err(|e| {
        let err = ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string());
        match e {
            DiscoveryError::NoAdmissibleCut { rules, .. } => err.with(
                "rules",
                rules.iter().map(ToString::to_string).collect::<Vec<_>>(),
            ),
            _ => err,
        }
    })?;
    session.models_built += 1;
    let record = ModelRecord {
        id: format!("model-{}", session.models_built),
        sup,
        rules,
        tree: discovery.tree,
        warnings: discovery.warnings.clone(),
    };
    session.pending_warnings.extend(discovery.warnings);
    let response = ModelResponse {
        model_id: record.id.clone(),
        sup,
        rules: raw_rules(&record.rules),
        text: record.tree.to_text(),
        json: record.tree.to_json(),
        dot: record.tree.to_dot(),
        warnings: session.take_warnings(),
    };
    session.model = Some(record);
    app.persist(&session).map_err(ApiError::internal)?;
    Ok(Json(response))
}

#[derive(Debug, Deserialize)]
struct ModelQuery {
    format: Option<String>,
}

const WARNINGS_HEADER: &str = "x-rulemine-warnings";
const MODEL_ID_HEADER: &str = "x-rulemine-model-id";

/// The latest model as `text`, `json` or `dot`. Warnings travel in a header
/// so the body stays the exact serialization.
async fn get_model(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<ModelQuery>,
) -> ApiResult<Response> {
    let session = lock(slot(&app, &id)?)?;
    let format = q.format.as_deref().unwrap_or("text");
    let model = session
        .model
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no model has been discovered yet"))?;
    let (content_type, body) = match format {
        "text" => ("text/plain; charset=utf-8", model.tree.to_text()),
        "json" => ("application/json", model.tree.to_json().to_string()),
        "dot" => ("text/vnd.graphviz; charset=utf-8", model.tree.to_dot()),
        other => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                format!("unknown model format {other:?}; use text, json or dot"),
            ))
        }
    };
    let warnings = serde_json::to_string(&session.pending_warnings).map_err(ApiError::internal)?;
    let mut response = (StatusCode::OK, body).into_response();
    let headers = response.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static(content_type));
    headers.insert(
        HeaderName::from_static(MODEL_ID_HEADER),
        HeaderValue::from_str(&model.id).map_err(ApiError::internal)?,
    );
    // Header values must be visible ASCII; \u escapes keep it valid JSON.
    headers.insert(
        HeaderName::from_static(WARNINGS_HEADER),
        HeaderValue::from_str(&ascii_json(&warnings)).map_err(ApiError::internal)?,
    );
    Ok(response)
}

fn ascii_json(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if c.is_ascii() && !c.is_ascii_control() {
            out.push(c);
        } else {
            let mut buf = [0u16; 2];
            for unit in c.encode_utf16(&mut buf) {
                out.push_str(&format!("\\u{unit:04x}"));
            }
        }
    }
    out
}

/// Rules from an interchange document, checked against `alphabet` when
/// given.
pub fn rules_from_document(
    json: &str,
    alphabet: Option<&BTreeSet<Activity>>,
) -> Result<Vec<Rule>, String> {
    let set: RuleSet = serde_json::from_str(json).map_err(|e| format!("cannot read rules: {e}"))?;
    match alphabet {
        Some(alphabet) => validate(&set.constraints, alphabet).map_err(|d| {
            d.iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ")
        }),
        None => set.to_rules().map_err(|e| e.to_string()),
    }
}
