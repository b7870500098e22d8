//! In-process HTTP client over the API router.

#![allow(dead_code)]

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

pub struct Client {
    pub app: Router,
}

pub struct Reply {
    pub status: StatusCode,
    pub text: String,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.text).unwrap_or_else(|e| panic!("{e}: {}", self.text))
    }
}

impl Client {
    pub async fn send(&self, method: Method, uri: &str, body: Option<Value>) -> Reply {
        let mut req = Request::builder().method(method).uri(uri);
        let body = match body {
            Some(v) => {
                req = req.header("content-type", "application/json");
                Body::from(v.to_string())
            }
            None => Body::empty(),
        };
        let resp = self.app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        Reply { status, text: String::from_utf8(bytes.to_vec()).unwrap() }
    }

    pub async fn get(&self, uri: &str) -> Reply {
        self.send(Method::GET, uri, None).await
    }

    pub async fn post(&self, uri: &str, body: Value) -> Reply {
        self.send(Method::POST, uri, Some(body)).await
    }

    /// Creates a session and returns its id and initial state.
    pub async fn create(&self, source: &str) -> (String, Value) {
        let r = self.post("/sessions", json!({ "pipeline_source": source })).await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.text);
        let v = r.json();
        (v["session_id"].as_str().unwrap().to_string(), v["state"].clone())
    }

    pub async fn choose(&self, id: &str, option_id: &str) -> Reply {
        self.post(&format!("/sessions/{id}/choose"), json!({ "option_id": option_id })).await
    }

    pub async fn tile(&self, id: &str, rx: i64, ry: i64) -> Reply {
        self.post(&format!("/sessions/{id}/tile"), json!({ "range_x": rx, "range_y": ry })).await
    }

    pub async fn undo(&self, id: &str) -> Reply {
        self.send(Method::POST, &format!("/sessions/{id}/undo"), None).await
    }
}

/// A recorded mutation, replayable against any session.
#[derive(Debug, Clone)]
pub enum Step {
    Choose(String),
    Tile(i64, i64),
    Undo,
}

impl Client {
    pub async fn apply(&self, id: &str, step: &Step) -> Reply {
        match step {
            Step::Choose(o) => self.choose(id, o).await,
            Step::Tile(x, y) => self.tile(id, *x, *y).await,
            Step::Undo => self.undo(id).await,
        }
    }
}

/// The guided gaussian walkthrough as option ids.
pub const WALKTHROUGH: [&str; 4] =
    ["blur/tile/8x4", "blur_y/at/blur.outer/blur.inner:0", "bounded/at/blur.outer/blur.inner:0", "kernel/at/root:0"];
