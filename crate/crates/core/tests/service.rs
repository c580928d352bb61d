mod common;

use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use customnet::config::RunConfig;
use customnet::experiment::train_run;
use customnet::service::{router, AppState};
use customnet::world::{RgbImage, RgbaImage};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Fixture {
    _dir: tempfile::TempDir,
    config: RunConfig,
    checkpoint: std::path::PathBuf,
}

/// One short training run shared by every test in this file.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let config = common::tiny_run_config(dir.path());
        let run = dir.path().join("run");
        std::fs::create_dir_all(&run).unwrap();
        let out = train_run(&config, &run).unwrap();
        Fixture {
            config,
            checkpoint: out.checkpoint,
            _dir: dir,
        }
    })
}

fn state_with(edit: impl FnOnce(&mut RunConfig)) -> Arc<AppState> {
    let f = fixture();
    let mut config = f.config.clone();
    edit(&mut config);
    Arc::new(AppState::load(config, &f.checkpoint).unwrap())
}

async fn call(state: Arc<AppState>, req: Request<Body>) -> (StatusCode, Value) {
    let resp = router(state).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn get(path: &str) -> Request<Body> {
    Request::get(path).body(Body::empty()).unwrap()
}

fn post(body: &Value) -> Request<Body> {
    Request::post("/api/sample")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

fn request() -> Value {
    json!({
        "object_id": "red-cube",
        "rel_pose": [0.0, 0.8, 0.0],
        "bbox": {"x": 0.2, "y": 0.2, "w": 0.6, "h": 0.6},
        "prompt": "a red cube on a checker background",
        "steps": 4,
        "seed": 7
    })
}

#[tokio::test]
async fn health_reports_checkpoint_digest() {
    let (status, body) = call(state_with(|_| {}), get("/api/health")).await;
    assert_eq!(status, StatusCode::OK);
    assert!(!body["checkpoint_digest"].as_str().unwrap().is_empty());
    assert!(!body["version"].as_str().unwrap().is_empty());
}

#[tokio::test]
async fn objects_list_the_gallery() {
    let (status, body) = call(state_with(|_| {}), get("/api/objects")).await;
    assert_eq!(status, StatusCode::OK);
    let objects = body["objects"].as_array().unwrap();
    assert!(objects.len() >= 4);
    let red = objects.iter().find(|o| o["id"] == "red-cube").expect("red-cube listed");
    let png = B64.decode(red["thumbnail"].as_str().unwrap()).unwrap();
    assert_eq!(RgbaImage::from_png_bytes(&png).unwrap().width(), common::RES);
}

#[tokio::test]
async fn config_is_served() {
    let (status, body) = call(state_with(|_| {}), get("/api/config")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["service"]["max_steps"], 20);
}

#[tokio::test]
async fn identical_requests_give_identical_images() {
    let state = state_with(|_| {});
    let (s1, a) = call(state.clone(), post(&request())).await;
    let (s2, b) = call(state.clone(), post(&request())).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(a["image"], b["image"]);
    let png = B64.decode(a["image"].as_str().unwrap()).unwrap();
    let img = RgbImage::from_png_bytes(&png).unwrap();
    assert_eq!((img.width(), img.height()), (common::RES, common::RES));
    assert!(a["metrics"]["identity"].as_f64().unwrap().abs() <= 1.0);

    let mut other = request();
    other["seed"] = json!(8);
    let (_, c) = call(state, post(&other)).await;
    assert_ne!(a["image"], c["image"]);
}

#[tokio::test]
async fn composition_requests_take_a_background() {
    let bg = RgbImage::filled(common::RES, common::RES, [0.1, 0.6, 0.3]);
    let mut req = request();
    req.as_object_mut().unwrap().remove("prompt");
    req["background"] = json!(B64.encode(bg.png_bytes().unwrap()));
    let (status, body) = call(state_with(|_| {}), post(&req)).await;
    assert_eq!(status, StatusCode::OK, "{body}");
}

async fn rejected(req: Value) -> (String, String) {
    let (status, body) = call(state_with(|_| {}), post(&req)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
    let e = &body["error"];
    (e["kind"].as_str().unwrap().to_string(), e["field"].as_str().unwrap_or("").to_string())
}

#[tokio::test]
async fn out_of_frame_bbox_is_rejected() {
    let mut req = request();
    req["bbox"] = json!({"x": 0.6, "y": 0.1, "w": 0.6, "h": 0.5});
    assert_eq!(rejected(req).await, ("invalid_input".into(), "bbox".into()));
}

#[tokio::test]
async fn invalid_fields_are_named() {
    let mut r = request();
    r["object_id"] = json!("purple-teapot");
    assert_eq!(rejected(r).await.1, "object_id");

    let mut r = request();
    r["steps"] = json!(21);
    assert_eq!(rejected(r).await.1, "steps");

    let mut r = request();
    r["prompt"] = json!("a red dodecahedron");
    assert_eq!(rejected(r).await.1, "prompt");

    let mut r = request();
    r["background"] = json!("not base64!");
    assert_eq!(rejected(r).await.1, "background");

    let mut r = request();
    r["reference"] = json!("AAAA");
    assert_eq!(rejected(r).await.1, "object_id");

    let mut r = request();
    r["bbox"].as_object_mut().unwrap().remove("h");
    assert_eq!(rejected(r).await.1, "bbox.h");

    let mut r = request();
    r["rel_pose"] = json!([0.0, 1.0]);
    assert_eq!(rejected(r).await.1, "rel_pose");
}

#[tokio::test]
async fn full_queue_refuses_with_503() {
    let state = state_with(|c| {
        c.service.workers = 1;
        c.service.queue_depth = 0;
    });
    // on the current-thread runtime the first request holds the only
    // admission permit while its sampling runs on the blocking pool
    let (a, b) = tokio::join!(call(state.clone(), post(&request())), call(state, post(&request())));
    assert_eq!(a.0, StatusCode::OK);
    assert_eq!(b.0, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(b.1["error"]["kind"], "queue_full");
}

#[tokio::test]
async fn slow_requests_time_out_with_504() {
    let state = state_with(|c| c.service.timeout_ms = 0);
    let (status, body) = call(state, post(&request())).await;
    assert_eq!(status, StatusCode::GATEWAY_TIMEOUT);
    assert_eq!(body["error"]["kind"], "timeout");
}

#[test]
fn mismatched_checkpoint_refuses_startup() {
    let f = fixture();
    let mut config = f.config.clone();
    config.model.unet.widths = vec![16, 48];
    assert!(AppState::load(config, &f.checkpoint).is_err());
}
