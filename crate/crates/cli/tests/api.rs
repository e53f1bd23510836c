use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use partreg_cli::service::{router, spawn_session, AppState, ServiceOptions};
use partreg_core::io::{parse_ply, RunReport};
use partreg_core::pipeline::PipelineConfig;
use partreg_core::runner;
use partreg_core::scansim::{Experiment, ModelKind};
use serde_json::{json, Value};
use tower::ServiceExt;

fn app() -> (AppState, Router, partreg_core::io::ScenarioBundle) {
    let bundle = runner::generate(Experiment::E2, ModelKind::Lander, 3).unwrap();
    let cfg = PipelineConfig {
        interactive: true,
        ..runner::default_config(&bundle)
    };
    let state = spawn_session(
        bundle.clone(),
        cfg,
        ServiceOptions {
            tolerance: None,
            ui_dir: None,
        },
    )
    .unwrap();
    (state.clone(), router(state), bundle)
}

async fn call(router: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let res = router.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let body = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body)
}

async fn get_json(router: &Router, uri: &str) -> (StatusCode, Value) {
    let (s, b) = call(router, Request::get(uri).body(Body::empty()).unwrap()).await;
    (s, serde_json::from_slice(&b).unwrap())
}

async fn command(router: &Router, cmd: &str) -> (StatusCode, Value) {
    let req = Request::post("/api/session/command")
        .header("content-type", "application/json")
        .body(Body::from(json!({ "command": cmd }).to_string()))
        .unwrap();
    let (s, b) = call(router, req).await;
    (s, serde_json::from_slice(&b).unwrap())
}

#[tokio::test]
async fn idle_before_start_and_errors_leave_state_alone() {
    let (_, router, _) = app();
    let (s, before) = get_json(&router, "/api/session").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(before["status"], "idle");
    assert_eq!(before["schema_version"], 1);

    let (s, body) = command(&router, "accept").await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert!(body["error"].as_str().unwrap().contains("checkpoint"));
    let (_, after) = get_json(&router, "/api/session").await;
    assert_eq!(after, before);

    let (s, _) = command(&router, "jump").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = get_json(&router, "/api/report").await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn retry_advances_the_candidate_then_accepting_completes() {
    let (_, router, bundle) = app();
    let (s, state) = command(&router, "start").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(state["status"], "awaiting-command");
    let pending = state["pending"].clone();
    assert_eq!(pending["stage"], "ransac");
    let first_attempt = pending["attempt"].as_u64().unwrap();

    let (s, retried) = command(&router, "retry").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(retried["pending"]["part"], pending["part"]);
    assert_eq!(retried["pending"]["attempt"].as_u64().unwrap(), first_attempt + 1);
    assert_ne!(retried, state);
    let (s, _) = command(&router, "start").await;
    assert_eq!(s, StatusCode::CONFLICT);

    let mut guard = 0;
    loop {
        let (s, st) = command(&router, "accept").await;
        assert_eq!(s, StatusCode::OK);
        if st["status"] == "completed" {
            break;
        }
        guard += 1;
        assert!(guard < 200, "session never completed");
    }
    let (s, report) = get_json(&router, "/api/report").await;
    assert_eq!(s, StatusCode::OK);
    let report: RunReport = serde_json::from_value(report).unwrap();
    report.validate(&bundle.graph).unwrap();
    assert!(report.metrics.is_some());
    let (s, _) = command(&router, "accept").await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn clouds_are_served_as_ply() {
    let (_, router, bundle) = app();
    let fetch = |which: &'static str| {
        let router = router.clone();
        async move {
            let (s, b) = call(&router, Request::get(format!("/api/clouds/{which}")).body(Body::empty()).unwrap()).await;
            assert_eq!(s, StatusCode::OK, "{which}");
            parse_ply(std::str::from_utf8(&b).unwrap()).unwrap()
        }
    };
    assert_eq!(fetch("source").await, bundle.source);
    assert_eq!(fetch("target").await, bundle.target);
    assert_eq!(fetch("current").await.len(), bundle.source.len());
    let (s, _) = call(&router, Request::get("/api/clouds/other").body(Body::empty()).unwrap()).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn current_cloud_follows_the_session() {
    let (_, router, bundle) = app();
    let (_, b0) = call(&router, Request::get("/api/clouds/current").body(Body::empty()).unwrap()).await;
    command(&router, "start").await;
    let (_, b1) = call(&router, Request::get("/api/clouds/current").body(Body::empty()).unwrap()).await;
    let before = parse_ply(std::str::from_utf8(&b0).unwrap()).unwrap();
    let after = parse_ply(std::str::from_utf8(&b1).unwrap()).unwrap();
    assert_eq!(before.points, bundle.source.points);
    assert_ne!(after.points, before.points, "whole-body pose applied after start");
}

#[tokio::test]
async fn event_stream_pushes_checkpoints() {
    let (_, router, _) = app();
    let res = router
        .clone()
        .oneshot(Request::get("/api/events").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    assert!(res.headers()["content-type"].to_str().unwrap().starts_with("text/event-stream"));
    let mut body = res.into_body();
    command(&router, "start").await;
    let mut seen = String::new();
    while !(seen.contains("event: checkpoint") && seen.contains("event: state")) {
        let frame = tokio::time::timeout(Duration::from_secs(10), body.frame())
            .await
            .expect("event within timeout")
            .expect("stream open")
            .unwrap();
        if let Ok(data) = frame.into_data() {
            seen.push_str(std::str::from_utf8(&data).unwrap());
        }
    }
    assert!(seen.contains("event: started"));
    assert!(seen.contains("event: whole-body"));
}

#[tokio::test]
async fn static_assets_served_from_ui_dir() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>ui</html>").unwrap();
    let bundle = runner::generate(Experiment::E1, ModelKind::Robot, 1).unwrap();
    let cfg = runner::default_config(&bundle);
    let state = spawn_session(
        bundle,
        cfg,
        ServiceOptions {
            tolerance: None,
            ui_dir: Some(dir.path().to_path_buf()),
        },
    )
    .unwrap();
    let router = router(state);
    let (s, b) = call(&router, Request::get("/").body(Body::empty()).unwrap()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(b, b"<html>ui</html>");
    let (s, _) = call(&router, Request::get("/missing.js").body(Body::empty()).unwrap()).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}
