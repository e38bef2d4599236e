mod common;

use std::process::{Command, Output};

use axum::http::StatusCode;
use common::{post, TestApp};
use serde_json::json;

fn arise(app: &TestApp, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arise"))
        .arg("--config")
        .arg(&app.config_path)
        .args(args)
        .env_remove("ARISE_CONFIG")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[tokio::test]
async fn simulate_prints_the_api_body() {
    let app = TestApp::new();
    for (args, body) in [
        (
            vec!["simulate", "--use-case", "torino", "--water-level", "230", "--temp-delta", "1.5"],
            json!({"use_case": "torino", "water_level": 230.0, "temp_delta": 1.5}),
        ),
        (
            vec!["simulate", "--use-case", "torino", "--temp-delta", "-2"],
            json!({"use_case": "torino", "temp_delta": -2.0}),
        ),
    ] {
        let out = arise(&app, &args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let (status, api_body) = app.call(post("/offsite/simulate", body.to_string())).await;
        assert_eq!(status, StatusCode::OK);
        let stdout = String::from_utf8(out.stdout).unwrap();
        assert_eq!(stdout.trim_end().as_bytes(), api_body.as_slice());
    }
}

#[test]
fn missing_config_exits_2() {
    let out = Command::new(env!("CARGO_BIN_EXE_arise"))
        .args(["simulate", "--use-case", "torino"])
        .env_remove("ARISE_CONFIG")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ARISE_CONFIG"));

    let out = Command::new(env!("CARGO_BIN_EXE_arise"))
        .args(["--config", "/definitely/not/here.json", "ingest", "--use-case", "torino"])
        .env_remove("ARISE_CONFIG")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn env_config_takes_precedence() {
    let app = TestApp::new();
    let out = Command::new(env!("CARGO_BIN_EXE_arise"))
        .args(["--config", "/definitely/not/here.json", "simulate", "--use-case", "torino"])
        .env("ARISE_CONFIG", &app.config_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn ingest_is_idempotent() {
    let app = TestApp::new();
    let first = arise(&app, &["ingest", "--use-case", "torino"]);
    let second = arise(&app, &["ingest", "--use-case", "torino"]);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
    let summary: serde_json::Value = serde_json::from_slice(&first.stdout).unwrap();
    assert_eq!(summary["reviews"], 46);
    assert_eq!(summary["skipped"], 1);
    assert_eq!(summary["ignored"], 1);
    let stored = app.reopen().stats("torino").unwrap();
    assert_eq!(serde_json::to_value(stored).unwrap(), summary["pois"]);
}

#[test]
fn refresh_gallery_then_nothing_new() {
    let app = TestApp::new();
    let first = arise(&app, &["refresh-gallery", "--use-case", "torino"]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(String::from_utf8(first.stdout).unwrap().trim(), r#"{"created":5,"retained":0}"#);
    let second = arise(&app, &["refresh-gallery", "--use-case", "torino"]);
    assert_eq!(String::from_utf8(second.stdout).unwrap().trim(), r#"{"created":0,"retained":5}"#);
}

#[test]
fn unknown_use_case_fails() {
    let app = TestApp::new();
    let out = arise(&app, &["simulate", "--use-case", "atlantis"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("atlantis"));
}
