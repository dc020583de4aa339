#![allow(dead_code)]

use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::Value;
use tower::ServiceExt;

use simulacra_app::runs::Pipeline;
use simulacra_app::server::{router, AppState};
use simulacra_core::llm::Gateway;
use simulacra_core::store::ProjectStore;

pub struct TestApp {
    pub app: Router,
    pub store: ProjectStore,
    _dir: tempfile::TempDir,
}

pub fn app() -> TestApp {
    let dir = tempfile::tempdir().unwrap();
    let store = ProjectStore::open(dir.path()).unwrap();
    let app = router(AppState::new(Pipeline::new(store.clone(), Gateway::mock())));
    TestApp { app, store, _dir: dir }
}

impl TestApp {
    /// A fresh service over the same project, as after a process restart.
    pub fn restart(self) -> (TestApp, Arc<AppState>) {
        let store = ProjectStore::open(self._dir.path()).unwrap();
        let state = AppState::new(Pipeline::new(store.clone(), Gateway::mock()));
        let app = router(state.clone());
        (TestApp { app, store, _dir: self._dir }, state)
    }

    pub async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let mut req = Request::builder().method(method).uri(uri);
        let body = match body {
            Some(v) => {
                req = req.header("content-type", "application/json");
                Body::from(serde_json::to_vec(&v).unwrap())
            }
            None => Body::empty(),
        };
        let resp = self.app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
        let status = resp.status();
        let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
        };
        (status, value)
    }

    pub async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.call("GET", uri, None).await
    }

    pub async fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        self.call("POST", uri, Some(body)).await
    }

    /// Polls a run until it leaves the running state.
    pub async fn settle(&self, run_id: &str) -> Value {
        let start = Instant::now();
        loop {
            let (status, run) = self.get(&format!("/api/v1/runs/{run_id}")).await;
            assert_eq!(status, StatusCode::OK, "{run}");
            if run["state"] != "running" {
                return run;
            }
            assert!(start.elapsed() < Duration::from_secs(60), "run {run_id} never settled");
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
    }
}
