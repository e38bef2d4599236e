#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use arise_service::{AppState, ServiceConfig};
use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use tempfile::TempDir;
use tower::ServiceExt;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Writes a config for the fixture use case whose data directory lives in `dir`.
pub fn write_config(dir: &Path, extra: serde_json::Value) -> PathBuf {
    let uc = fixtures().join("torino");
    let mut cfg = serde_json::json!({
        "data_dir": dir.join("data"),
        "refresh_on_start": false,
        "use_cases": [{
            "name": "torino",
            "poi_registry_path": uc.join("pois.json"),
            "review_fixture_path": uc.join("reviews.jsonl"),
            "heightmap_path": uc.join("heightmap.asc"),
            "veg_base_path": uc.join("veg_base.asc"),
            "flood_seeds": [[0, 13], [20, 12], [39, 14]]
        }]
    });
    if let (Some(base), Some(more)) = (cfg.as_object_mut(), extra.as_object()) {
        for (k, v) in more {
            base.insert(k.clone(), v.clone());
        }
    }
    let path = dir.join("arise.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&cfg).unwrap()).unwrap();
    path
}

pub struct TestApp {
    pub dir: TempDir,
    pub config_path: PathBuf,
    pub state: Arc<AppState>,
}

impl TestApp {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let config_path = write_config(dir.path(), serde_json::json!({}));
        let state = Arc::new(AppState::open(ServiceConfig::load(&config_path).unwrap()).unwrap());
        Self { dir, config_path, state }
    }

    /// Reopens the same data directory, as after a restart.
    pub fn reopen(&self) -> Arc<AppState> {
        Arc::new(AppState::open(ServiceConfig::load(&self.config_path).unwrap()).unwrap())
    }

    pub async fn call(&self, req: Request<Body>) -> (StatusCode, Vec<u8>) {
        send(self.state.clone(), req).await
    }

    pub async fn get_json(&self, uri: &str) -> (StatusCode, serde_json::Value) {
        let (status, body) = self.call(get(uri)).await;
        (status, serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null))
    }

    pub async fn post_json(&self, uri: &str, body: serde_json::Value) -> (StatusCode, serde_json::Value) {
        self.post_json_raw(uri, body.to_string()).await
    }

    pub async fn post_json_raw(&self, uri: &str, body: String) -> (StatusCode, serde_json::Value) {
        let (status, body) = self.call(post(uri, body)).await;
        (status, serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null))
    }
}

pub async fn send(state: Arc<AppState>, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = arise_service::api::router(state).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

pub fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

pub fn post(uri: &str, body: impl Into<String>) -> Request<Body> {
    Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.into()))
        .unwrap()
}

/// The ten-message conversation that files one flood report.
pub fn report_conversation(session: &str, lat: f64, lon: f64) -> String {
    let lines = [
        serde_json::json!({"session_id": session, "kind": "command", "text": "/report"}),
        serde_json::json!({"session_id": session, "kind": "location", "location": {"lat": lat, "lon": lon}}),
        serde_json::json!({"session_id": session, "kind": "text", "text": "flood"}),
        serde_json::json!({"session_id": session, "kind": "text", "text": "Water in the underpass"}),
        serde_json::json!({"session_id": session, "kind": "photo", "media_uri": "file://underpass.jpg"}),
        serde_json::json!({"session_id": session, "kind": "command", "text": "/skip"}),
        serde_json::json!({"session_id": session, "kind": "text", "text": "water_depth 0.3 m"}),
        serde_json::json!({"session_id": session, "kind": "text", "text": "structural 2"}),
        serde_json::json!({"session_id": session, "kind": "text", "text": "foundations"}),
        serde_json::json!({"session_id": session, "kind": "text", "text": "yes"}),
    ];
    lines.iter().map(|l| format!("{l}\n")).collect()
}
