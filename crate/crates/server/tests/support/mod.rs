#![allow(dead_code)]

use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{HeaderMap, Method, Request, StatusCode};
use axum::Router;
use rulemine_server::{router, AppState};
use serde_json::Value;
use tower::ServiceExt;

pub const CLAIMS: &[u8] = include_bytes!("../../../core/tests/fixtures/claims.csv");
pub const CLAIMS_XES: &[u8] = include_bytes!("../../../core/tests/fixtures/claims.xes");

pub const NOT_SUCCESSION: &str = r#"{"constraints": [{"template": "NotSuccession", "activities": ["Doc-checked", "Hist-checked"]}]}"#;
pub const FIVE_RULES: &str = r#"{"constraints": [
    {"template": "Precedence", "activities": ["A-created", "A-canceled"]},
    {"template": "NotSuccession", "activities": ["Doc-checked", "Hist-checked"]},
    {"template": "Response", "activities": ["A-created", "Hist-checked"]},
    {"template": "AtMost1", "activities": ["A-created"]},
    {"template": "NotCoExistence", "activities": ["A-accepted", "A-rejected"]}
]}"#;

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body)
            .unwrap_or_else(|e| panic!("not JSON ({e}): {}", String::from_utf8_lossy(&self.body)))
    }

    pub fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }
}

pub struct Api {
    pub state: Arc<AppState>,
    pub router: Router,
}

impl Api {
    pub fn new() -> Self {
        Api::with_state(AppState::in_memory())
    }

    pub fn with_state(state: AppState) -> Self {
        let state = Arc::new(state);
        Api {
            router: router(state.clone()),
            state,
        }
    }

    pub async fn raw(&self, method: Method, uri: &str, body: Vec<u8>, json: bool) -> Reply {
        let mut req = Request::builder().method(method).uri(uri);
        if json {
            req = req.header("content-type", "application/json");
        }
        let resp = self
            .router
            .clone()
            .oneshot(req.body(Body::from(body)).unwrap())
            .await
            .unwrap();
        let status = resp.status();
        let headers = resp.headers().clone();
        let body = to_bytes(resp.into_body(), usize::MAX)
            .await
            .unwrap()
            .to_vec();
        Reply {
            status,
            headers,
            body,
        }
    }

    pub async fn get(&self, uri: &str) -> Reply {
        self.raw(Method::GET, uri, Vec::new(), false).await
    }

    pub async fn send(&self, method: Method, uri: &str, body: Value) -> Reply {
        self.raw(method, uri, serde_json::to_vec(&body).unwrap(), true)
            .await
    }

    pub async fn upload(&self, content: &[u8], format: &str) -> Reply {
        self.raw(
            Method::POST,
            &format!("/logs?format={format}"),
            content.to_vec(),
            false,
        )
        .await
    }

    pub async fn claims(&self) -> String {
        let r = self.upload(CLAIMS, "csv").await;
        assert_eq!(r.status, StatusCode::CREATED);
        r.json()["id"].as_str().unwrap().to_string()
    }

    /// A session on the claims log whose scripted client replays `responses`.
    pub async fn session(&self, responses: &[&str], repeat: bool) -> String {
        let log = self.claims().await;
        let r = self
            .send(
                Method::POST,
                "/sessions",
                serde_json::json!({
                    "log_id": log,
                    "client": {"kind": "scripted", "responses": responses, "repeat": repeat}
                }),
            )
            .await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
        r.json()["id"].as_str().unwrap().to_string()
    }

    pub async fn message(&self, session: &str, text: &str) -> Reply {
        self.send(
            Method::POST,
            &format!("/sessions/{session}/messages"),
            serde_json::json!({ "text": text }),
        )
        .await
    }

    pub async fn discover(&self, session: &str, body: Value) -> Reply {
        self.send(Method::POST, &format!("/sessions/{session}/discover"), body)
            .await
    }

    pub async fn select(&self, session: &str, body: Value) -> Reply {
        self.send(Method::PUT, &format!("/sessions/{session}/selection"), body)
            .await
    }
}
