use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use chimera::config::entry;
use chimera::server::{router, AppState};
use chimera::{AssetSource, ComposerParams, PipelineConfig};
use chimera_core::layout::ClassifiedAsset;
use chimera_core::skeleton::DEFAULT_PRUNE_FRACTION;
use chimera_core::voxel::SparseLatent;
use chimera_gateway::transport::{RecordingTransport, TransportError};
use chimera_gateway::{fixture_bundle, BackendConfig, Gateway, RgbaImage};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn offline_app() -> Router {
    app_with(PipelineConfig::offline("", vec![], "unused".into()).backends, Gateway::offline())
}

fn app_with(backends: chimera::Backends, gateway: Gateway) -> Router {
    router(Arc::new(AppState::new(backends, ComposerParams::default(), gateway)))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = raw(app, method, uri, body).await;
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
    (status, v)
}

async fn raw(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    call(app, Method::POST, uri, Some(body)).await
}

async fn session(app: &Router, fixtures: &[&str]) -> String {
    let (s, v) = call(app, Method::POST, "/sessions", None).await;
    assert_eq!(s, StatusCode::CREATED);
    let id = v["id"].as_str().unwrap().to_string();
    for f in fixtures {
        let (s, v) = post(app, &format!("/sessions/{id}/assets"), json!({ "fixture": f })).await;
        assert_eq!(s, StatusCode::OK, "{v}");
    }
    id
}

async fn planned(app: &Router) -> String {
    let id = session(app, &["quadruped", "winged"]).await;
    assert_eq!(post(app, &format!("/sessions/{id}/classify"), json!({})).await.0, StatusCode::OK);
    let (s, v) = post(app, &format!("/sessions/{id}/plan"), json!({ "request": "a quadruped with wings" })).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    id
}

#[tokio::test]
async fn classify_returns_the_quadruped_partition() {
    let app = offline_app();
    let id = session(&app, &["quadruped"]).await;
    let (s, v) = post(&app, &format!("/sessions/{id}/classify"), json!({})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["revision"], 2);
    let regions = v["partitions"][0]["partition"]["regions"].as_array().unwrap();
    assert_eq!(regions.len(), 7);
    let direct =
        ClassifiedAsset::classify("quadruped", &fixture_bundle("quadruped").unwrap().skeleton, DEFAULT_PRUNE_FRACTION)
            .unwrap();
    assert_eq!(v["partitions"][0]["partition"], serde_json::to_value(&direct.partition).unwrap());
}

#[tokio::test]
async fn invalid_op_is_rejected_with_violations() {
    let app = offline_app();
    let id = planned(&app).await;
    let (_, before) = call(&app, Method::GET, &format!("/sessions/{id}/preview"), None).await;
    let op = json!({ "type": "scale", "target": "winged/wing/0", "factor": 0.0, "pivot": [0.0, 0.0, 0.0] });
    let (s, v) = post(&app, &format!("/sessions/{id}/ops"), op).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(!v["violations"].as_array().unwrap().is_empty(), "{v}");
    let ghost = json!({ "type": "translate", "target": "winged/tail/0", "dir": [1.0, 0.0, 0.0], "dist": 0.1 });
    assert_eq!(post(&app, &format!("/sessions/{id}/ops"), ghost).await.0, StatusCode::BAD_REQUEST);
    let (_, after) = call(&app, Method::GET, &format!("/sessions/{id}/preview"), None).await;
    assert_eq!(before["revision"], after["revision"]);
    assert_eq!(before["skeleton"], after["skeleton"]);
}

#[tokio::test]
async fn rotating_the_head_moves_only_the_head() {
    let app = offline_app();
    let id = planned(&app).await;
    let (_, before) = call(&app, Method::GET, &format!("/sessions/{id}/preview"), None).await;
    let op = json!({ "type": "rotate", "target": "quadruped/head/0", "axis": [0.0, 1.0, 0.0], "pivot": [0.2, 0.2, 0.0], "angle_deg": 90.0 });
    let (s, v) = post(&app, &format!("/sessions/{id}/ops"), op).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["revision"].as_u64(), before["revision"].as_u64().map(|r| r + 1));
    let (a, b) = (before["skeleton"]["joints"].as_array().unwrap(), v["skeleton"]["joints"].as_array().unwrap());
    assert_eq!(a.len(), b.len());
    let moved = a.iter().zip(b).filter(|(x, y)| x != y).count();
    let q =
        ClassifiedAsset::classify("quadruped", &fixture_bundle("quadruped").unwrap().skeleton, DEFAULT_PRUNE_FRACTION)
            .unwrap();
    let head = q.partition.regions.iter().find(|r| r.label.to_string() == "head").unwrap();
    assert_eq!(moved, head.joints.len());
}

#[tokio::test]
async fn unknown_session_and_bad_payloads() {
    let app = offline_app();
    assert_eq!(post(&app, "/sessions/nope/classify", json!({})).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, Method::GET, "/sessions/nope/preview", None).await.0, StatusCode::NOT_FOUND);
    let id = session(&app, &[]).await;
    let (s, _) = raw(&app, Method::POST, &format!("/sessions/{id}/ops"), Some(json!("not an op"))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(post(&app, &format!("/sessions/{id}/classify"), json!({})).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(
        post(&app, &format!("/sessions/{id}/assets"), json!({ "fixture": "dragon" })).await.0,
        StatusCode::BAD_REQUEST
    );
    let both = json!({ "fixture": "fish", "prompt": "a fish" });
    assert_eq!(post(&app, &format!("/sessions/{id}/assets"), both).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(call(&app, Method::GET, "/artifacts/00", None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn sessions_do_not_share_revisions() {
    let app = offline_app();
    let a = session(&app, &[]).await;
    let b = session(&app, &[]).await;
    let mut seen_a = Vec::new();
    let mut seen_b = Vec::new();
    for f in ["quadruped", "winged", "fish"] {
        seen_a.push(post(&app, &format!("/sessions/{a}/assets"), json!({ "fixture": f })).await.1["revision"].clone());
        if f != "fish" {
            seen_b.push(
                post(&app, &format!("/sessions/{b}/assets"), json!({ "fixture": f })).await.1["revision"].clone(),
            );
        }
    }
    assert_eq!(seen_a, [1, 2, 3]);
    assert_eq!(seen_b, [1, 2]);
    let (_, v) = post(&app, &format!("/sessions/{b}/classify"), json!({})).await;
    assert_eq!(v["partitions"].as_array().unwrap().len(), 2);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_mutations_are_serialized() {
    let app = offline_app();
    let id = planned(&app).await;
    let start = call(&app, Method::GET, &format!("/sessions/{id}/preview"), None).await.1["revision"].as_u64().unwrap();
    let tasks: Vec<_> = (0..8)
        .map(|i| {
            let app = app.clone();
            let uri = format!("/sessions/{id}/ops");
            tokio::spawn(async move {
                let op = json!({ "type": "translate", "target": "winged/wing/0", "dir": [0.0, 1.0, 0.0], "dist": 0.001 * (i + 1) as f64 });
                post(&app, &uri, op).await
            })
        })
        .collect();
    let mut revs = Vec::new();
    for t in tasks {
        let (s, v) = t.await.unwrap();
        assert_eq!(s, StatusCode::OK, "{v}");
        revs.push(v["revision"].as_u64().unwrap());
    }
    revs.sort_unstable();
    assert_eq!(revs, (start + 1..=start + 8).collect::<Vec<_>>());
}

#[tokio::test]
async fn compose_publishes_a_stable_artifact() {
    let app = offline_app();
    let id = planned(&app).await;
    let (s, first) = post(&app, &format!("/sessions/{id}/compose"), json!({})).await;
    assert_eq!(s, StatusCode::OK, "{first}");
    let (_, second) = post(&app, &format!("/sessions/{id}/compose"), json!({})).await;
    assert_eq!(first["artifact"], second["artifact"]);
    assert!(second["revision"].as_u64() > first["revision"].as_u64());
    let (s, bytes) = raw(&app, Method::GET, first["url"].as_str().unwrap(), None).await;
    assert_eq!(s, StatusCode::OK);
    let z = SparseLatent::from_slat(&bytes).unwrap();
    assert_eq!(z.len() as u64, first["seams"]["voxels"].as_u64().unwrap());

    let (_, p) = call(&app, Method::GET, &format!("/sessions/{id}/preview"), None).await;
    assert_eq!(p["occupancy"]["resolution"], 16);
    let rle = p["occupancy"]["rle"].as_array().unwrap();
    let total: u64 = rle.iter().map(|r| r[1].as_u64().unwrap()).sum();
    assert_eq!(total, 16 * 16 * 16);
    let occupied: u64 = rle.iter().filter(|r| r[0] == 1).map(|r| r[1].as_u64().unwrap()).sum();
    assert!(occupied > 0);
}

#[tokio::test]
async fn style_needs_a_backend() {
    let app = offline_app();
    let id = planned(&app).await;
    let (s, v) = post(&app, &format!("/sessions/{id}/style"), json!({ "style": "steampunk" })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("image-editing"));
}

#[tokio::test]
async fn style_with_a_backend_returns_artifacts() {
    let edited = RgbaImage::new(2, 2, vec![200; 16]).unwrap();
    let t = Arc::new(RecordingTransport::new(vec![Ok(json!({ "image": B64.encode(edited.to_png().unwrap()) }))]));
    let mut backends =
        PipelineConfig::offline("", vec![entry(AssetSource::Fixture("fish".into()))], "x".into()).backends;
    backends.image_edit = BackendConfig::http("http://edit.test").unwrap();
    let app = app_with(backends, Gateway::new(t.clone()));
    let id = planned(&app).await;
    let (s, v) =
        post(&app, &format!("/sessions/{id}/style"), json!({ "style": "steampunk", "negative": "blurry" })).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let (_, png) = raw(&app, Method::GET, &format!("/artifacts/{}", v["edited"].as_str().unwrap()), None).await;
    assert_eq!(RgbaImage::from_png(&png).unwrap(), edited);
    let (_, slat) = raw(&app, Method::GET, &format!("/artifacts/{}", v["artifact"].as_str().unwrap()), None).await;
    let styled = SparseLatent::from_slat(&slat).unwrap();
    let (_, c) = post(&app, &format!("/sessions/{id}/compose"), json!({})).await;
    let (_, composed) = raw(&app, Method::GET, c["url"].as_str().unwrap(), None).await;
    assert_eq!(styled.positions(), SparseLatent::from_slat(&composed).unwrap().positions());
    let sent = &t.requests()[0].body;
    assert_eq!(sent["positive_prompt"], "steampunk");
    assert_eq!(sent["negative_prompt"], "blurry");
}

#[tokio::test]
async fn backend_failures_map_to_gateway_statuses() {
    for (err, status) in [
        (TransportError::Timeout("slow".into()), StatusCode::GATEWAY_TIMEOUT),
        (TransportError::Unreachable("down".into()), StatusCode::BAD_GATEWAY),
        (TransportError::BadResponse("junk".into()), StatusCode::BAD_GATEWAY),
    ] {
        let t = Arc::new(RecordingTransport::new(vec![Err(err)]));
        let mut backends = PipelineConfig::offline("", vec![], "x".into()).backends;
        backends.planner = BackendConfig::http("http://planner.test").unwrap();
        let app = app_with(backends, Gateway::new(t));
        let id = session(&app, &["quadruped", "winged"]).await;
        post(&app, &format!("/sessions/{id}/classify"), json!({})).await;
        let (s, v) = post(&app, &format!("/sessions/{id}/plan"), json!({ "request": "wings" })).await;
        assert_eq!(s, status, "{v}");
    }
}

#[tokio::test]
async fn explicit_plans_are_validated() {
    let app = offline_app();
    let id = session(&app, &["quadruped", "winged"]).await;
    post(&app, &format!("/sessions/{id}/classify"), json!({})).await;
    let plan: Value = serde_json::from_str(chimera_gateway::recorded_plan("quadruped-wings").unwrap()).unwrap();
    let (s, v) = post(&app, &format!("/sessions/{id}/plan"), json!({ "plan": plan })).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let mut bad = plan.clone();
    bad["parts"][0]["region"] = json!("wing");
    let (s, v) = post(&app, &format!("/sessions/{id}/plan"), json!({ "plan": bad })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(v["violations"].is_array(), "{v}");
}
