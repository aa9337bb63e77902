mod support;

use std::time::Duration;

use axum::http::{Method, StatusCode};
use rulemine_core::ProcessTree;
use rulemine_llm::{build_prompt, Message};
use rulemine_server::AppState;
use serde_json::json;
use support::*;

const L1_UNCONSTRAINED: &str = include_str!("../../core/tests/golden/l1_unconstrained.txt");

#[tokio::test]
async fn health() {
    let api = Api::new();
    let r = api.get("/healthz").await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["status"], "ok");
}

#[tokio::test]
async fn upload_summarizes_claims() {
    let api = Api::new();
    let r = api.upload(CLAIMS, "csv").await;
    assert_eq!(r.status, StatusCode::CREATED);
    let body = r.json();
    assert_eq!(body["traces"], 5);
    assert_eq!(body["events"], 13);
    assert_eq!(body["alphabet"].as_array().unwrap().len(), 6);

    let id = body["id"].as_str().unwrap();
    let again = api.get(&format!("/logs/{id}")).await;
    assert_eq!(again.json(), body);

    let xes = api
        .raw(Method::POST, "/logs", CLAIMS_XES.to_vec(), false)
        .await;
    assert_eq!(xes.status, StatusCode::CREATED);
    assert_eq!(xes.json()["events"], 13);
    assert_ne!(xes.json()["id"], body["id"]);
}

#[tokio::test]
async fn duplicate_upload_gets_a_new_id() {
    let api = Api::new();
    assert_ne!(api.claims().await, api.claims().await);
}

#[tokio::test]
async fn malformed_logs_are_rejected_with_diagnostics() {
    let api = Api::new();
    let r = api.upload(b"<log><trace><event>", "xes").await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(r.json()["error"].as_str().unwrap().len() > 5);
    let r = api.upload(b"a,b\n1,2\n", "csv").await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(r.json()["error"]
        .as_str()
        .unwrap()
        .contains("case:concept:name"));
    assert_eq!(api.get("/logs/nope").await.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn custom_csv_columns() {
    let api = Api::new();
    let csv = b"case,task\n1,a\n1,b\n2,a\n";
    let r = api
        .raw(
            Method::POST,
            "/logs?format=csv&case_column=case&activity_column=task",
            csv.to_vec(),
            false,
        )
        .await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
    assert_eq!(r.json()["traces"], 2);
}

#[tokio::test]
async fn session_creation_errors() {
    let api = Api::new();
    let r = api
        .send(
            Method::POST,
            "/sessions",
            json!({"log_id": "missing", "client": {"kind": "scripted", "responses": []}}),
        )
        .await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);

    let log = api.claims().await;
    let r = api
        .send(
            Method::POST,
            "/sessions",
            json!({"log_id": log, "client": {"kind": "provider", "provider": "anthropic", "model": "m", "api_key": ""}}),
        )
        .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert!(r.json()["error"].as_str().unwrap().contains("API key"));
}

#[tokio::test]
async fn message_returns_rules_with_statistics() {
    let api = Api::new();
    let s = api.session(&[FIVE_RULES], false).await;
    let r = api
        .message(&s, "Applications are created before anything else.")
        .await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    let body = r.json();
    assert_eq!(body["outcome"], "rules");
    let rows = body["rules"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[0]["template"], "Precedence");
    assert_eq!(rows[0]["support_fraction"], "2/5");
    assert_eq!(rows[0]["confidence_fraction"], "2/3");
    assert_eq!(rows[1]["support"], 0.2);
    assert_eq!(rows[1]["confidence"], 0.5);
    assert_eq!(rows[2]["confidence_fraction"], "1/2");

    let listed = api.get(&format!("/sessions/{s}/rules")).await.json();
    assert_eq!(listed["rules"], body["rules"]);
}

#[tokio::test]
async fn clarification_is_returned_verbatim() {
    let api = Api::new();
    let q = "Which objection is related to Block Claim 2?";
    let s = api.session(&[q], false).await;
    let body = api.message(&s, "Claims may be blocked.").await.json();
    assert_eq!(body["outcome"], "clarification");
    assert_eq!(body["text"], q);
    assert_eq!(body["error_cycles"], 0);
}

#[tokio::test]
async fn always_bad_client_reports_failure_transcript() {
    let api = Api::new();
    let s = api.session(&["{\"constraints\": [oops"], true).await;
    let body = api.message(&s, "text").await.json();
    assert_eq!(body["outcome"], "failure");
    assert_eq!(body["invocations"], 10);
    assert_eq!(body["attempts"].as_array().unwrap().len(), 10);
    assert!(!body["warnings"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn exhausted_script_is_a_gateway_error() {
    let api = Api::new();
    let s = api.session(&[], false).await;
    let r = api.message(&s, "text").await;
    assert_eq!(r.status, StatusCode::BAD_GATEWAY);
    assert_eq!(r.json()["retryable"], false);
    let history = api.get(&format!("/sessions/{s}")).await.json()["history"].clone();
    assert_eq!(history.as_array().unwrap().len(), 0);
}

#[tokio::test]
async fn selection_by_index_and_literal() {
    let api = Api::new();
    let s = api.session(&[FIVE_RULES], false).await;
    api.message(&s, "text").await;

    let r = api.select(&s, json!({"indices": [0, 1]})).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    assert_eq!(r.json()["selected"].as_array().unwrap().len(), 2);
    let rows = api.get(&format!("/sessions/{s}/rules")).await.json()["rules"].clone();
    let checked: Vec<bool> = rows
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["selected"].as_bool().unwrap())
        .collect();
    assert_eq!(checked, [true, true, false, false, false]);

    let r = api
        .select(&s, json!({"rules": ["AtLeast1(A-created)", {"template": "CoExistence", "activities": ["A-accepted", "Doc-checked"]}]}))
        .await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    assert_eq!(r.json()["selected"][0]["template"], "AtLeast1");

    let r = api
        .select(
            &s,
            json!({"rules": ["Respond(A-created, A-canceled)"], "indices": [9]}),
        )
        .await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.json()["diagnostics"].as_array().unwrap().len(), 2);
    // A rejected selection leaves the previous one in place.
    let listed = api.get(&format!("/sessions/{s}/rules")).await.json();
    assert_eq!(listed["selected"].as_array().unwrap().len(), 2);

    let r = api
        .select(
            &s,
            json!({"rules": ["Response(A-created, Unblock Claim 2)"]}),
        )
        .await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn selection_controls_the_rules_report() {
    let api = Api::new();
    let s = api.session(&[FIVE_RULES], false).await;
    api.message(&s, "text").await;
    let prompt_len = |api: &Api, s: String| {
        let slot = api.state.session(&s).unwrap();
        async move {
            let session = slot.lock().await;
            build_prompt(&session.conversation, &Message::expert("next"))
                .unwrap()
                .len()
        }
    };
    api.select(&s, json!({"indices": [0]})).await;
    // M0, ML, MR, two history messages, new message.
    assert_eq!(prompt_len(&api, s.clone()).await, 6);
    api.select(&s, json!({})).await;
    assert_eq!(prompt_len(&api, s.clone()).await, 5);
}

#[tokio::test]
async fn discovery_without_rules_matches_golden() {
    let api = Api::new();
    let s = api.session(&[], false).await;
    let r = api.discover(&s, json!({"sup": 0.2})).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    let body = r.json();
    assert_eq!(
        format!("{}\n", body["text"].as_str().unwrap()),
        L1_UNCONSTRAINED
    );
    assert_eq!(body["model_id"], "model-1");
    let again = api.discover(&s, json!({})).await.json();
    assert_eq!(again["text"], body["text"]);
    assert_eq!(again["model_id"], "model-2");
}

#[tokio::test]
async fn not_succession_changes_the_model() {
    let api = Api::new();
    let s = api.session(&[NOT_SUCCESSION], false).await;
    let plain = api.discover(&s, json!({"sup": 0.0})).await.json();
    api.message(&s, "history is never checked after the documents")
        .await;
    api.select(&s, json!({"indices": [0]})).await;
    let ruled = api.discover(&s, json!({"sup": 0.0})).await.json();
    assert!(plain["text"] != ruled["text"] || !ruled["warnings"].as_array().unwrap().is_empty());
    assert_eq!(ruled["rules"][0]["template"], "NotSuccession");
}

#[tokio::test]
async fn discovery_input_errors() {
    let api = Api::new();
    let s = api.session(&[], false).await;
    let r = api.discover(&s, json!({"sup": 1.5})).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);

    api.select(&s, json!({"rules": ["CoExistence(A-accepted, A-rejected)", "NotCoExistence(A-accepted, A-rejected)"]}))
        .await;
    let r = api.discover(&s, json!({"fallback": "abort"})).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let rules = r.json()["rules"].clone();
    assert!(rules
        .as_array()
        .unwrap()
        .iter()
        .any(|r| r == "NotCoExistence(A-accepted, A-rejected)"));
}

#[tokio::test]
async fn fallback_warnings_are_delivered_once() {
    let api = Api::new();
    let s = api.session(&[], false).await;
    api.select(&s, json!({"rules": ["CoExistence(A-accepted, A-rejected)", "NotCoExistence(A-accepted, A-rejected)"]}))
        .await;
    let body = api.discover(&s, json!({})).await.json();
    let warnings = body["warnings"].as_array().unwrap();
    assert!(warnings.iter().any(|w| w
        .as_str()
        .unwrap()
        .contains("NotCoExistence(A-accepted, A-rejected)")));
    let rules = api.get(&format!("/sessions/{s}/rules")).await.json();
    assert!(rules["warnings"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn model_formats() {
    let api = Api::new();
    let s = api.session(&[], false).await;
    let r = api.get(&format!("/sessions/{s}/model")).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);

    api.discover(&s, json!({})).await;
    let text = api.get(&format!("/sessions/{s}/model?format=text")).await;
    assert_eq!(text.status, StatusCode::OK);
    assert_eq!(text.headers["x-rulemine-model-id"], "model-1");
    let tree = ProcessTree::parse_text(&text.text()).unwrap();
    assert_eq!(tree.to_text(), text.text());

    let json = api.get(&format!("/sessions/{s}/model?format=json")).await;
    assert_eq!(ProcessTree::from_json(&json.json()).unwrap(), tree);

    let dot = api
        .get(&format!("/sessions/{s}/model?format=dot"))
        .await
        .text();
    assert!(dot.starts_with("digraph"));
    assert_eq!(dot.matches('{').count(), dot.matches('}').count());
    assert_eq!(dot.matches("->").count(), 12);

    let bad = api.get(&format!("/sessions/{s}/model?format=png")).await;
    assert_eq!(bad.status, StatusCode::BAD_REQUEST);

    // Reads have no side effects.
    let again = api.get(&format!("/sessions/{s}/model?format=text")).await;
    assert_eq!(again.body, text.body);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn concurrent_message_is_rejected_as_busy() {
    let api = Api::new();
    let log = api.claims().await;
    let r = api
        .send(
            Method::POST,
            "/sessions",
            json!({"log_id": log, "client": {"kind": "scripted", "responses": [NOT_SUCCESSION], "delay_ms": 600}}),
        )
        .await;
    let s = r.json()["id"].as_str().unwrap().to_string();
    let router = api.router.clone();
    let first = {
        let api = Api {
            state: api.state.clone(),
            router,
        };
        let s = s.clone();
        tokio::spawn(async move { api.message(&s, "first").await.status })
    };
    tokio::time::sleep(Duration::from_millis(150)).await;
    let second = api.message(&s, "second").await;
    assert_eq!(second.status, StatusCode::CONFLICT);
    assert_eq!(first.await.unwrap(), StatusCode::OK);
    // Other sessions are unaffected while one is busy.
    let other = api.session(&[], false).await;
    assert_eq!(api.discover(&other, json!({})).await.status, StatusCode::OK);
}

#[tokio::test]
async fn snapshots_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (session, model) = {
        let api = Api::with_state(AppState::with_state_dir(dir.path()).unwrap());
        let s = api.session(&[NOT_SUCCESSION], false).await;
        api.message(&s, "text").await;
        api.select(&s, json!({"indices": [0]})).await;
        let model = api.discover(&s, json!({})).await.json()["text"].clone();
        (s, model)
    };
    let api = Api::with_state(AppState::with_state_dir(dir.path()).unwrap());
    let restored = api.get(&format!("/sessions/{session}")).await.json();
    assert_eq!(restored["history"].as_array().unwrap().len(), 2);
    assert_eq!(restored["selected"].as_array().unwrap().len(), 1);
    let text = api.get(&format!("/sessions/{session}/model")).await.text();
    assert_eq!(text, model.as_str().unwrap());
    for file in walk(dir.path()) {
        let content = std::fs::read_to_string(&file).unwrap();
        assert!(!content.contains("api_key"), "{}", file.display());
    }
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push(path);
        }
    }
    out
}
