use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use hreye::driver_sim::DriverSim;
use hreye::service::{self, Handle, SchedulerConfig};
use hreye::session::{Device, Session};
use hreye_core::geometry::{LedAddress, Ring};
use hreye_core::lucemes::estimate_gaze;
use hreye_core::{Catalog, EyeId};
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(realtime: bool) -> (Router, Handle, Arc<DriverSim>) {
    let sim = Arc::new(DriverSim::new());
    let mut session = Session::new(Catalog::default(), 30, Device::Sim(Arc::clone(&sim))).unwrap();
    session.record();
    let handle = service::spawn_scheduler(session, Some(Arc::clone(&sim)), SchedulerConfig { realtime });
    (service::router(handle.clone(), None), handle, sim)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or(Body::empty(), |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn post_raw(app: &Router, uri: &str, body: &str) -> (StatusCode, Value) {
    let req = Request::post(uri).body(Body::from(body.to_string())).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test]
async fn mode_is_echoed_in_state() {
    let (app, _h, _) = app(false);
    let (status, v) = call(&app, "POST", "/api/mode", Some(json!({"type": "active", "id": "FollowYou"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["mode"]["type"], "active");
    assert_eq!(v["mode"]["id"], "FollowYou");

    let (status, v) = call(&app, "GET", "/api/state", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["mode"]["id"], "FollowYou");
    assert_eq!(v["fps"], 30);
    assert_eq!(v["device_connected"], true);
    assert_eq!(v["eyes"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn errors_have_codes_and_statuses() {
    let (app, _h, _) = app(false);
    let cases = [
        (json!({"type": "active", "id": "Wave"}), StatusCode::NOT_FOUND, "unknown_luceme"),
        (json!({"type": "active"}), StatusCode::BAD_REQUEST, "missing_field"),
        (json!({"type": "ocular", "angle": 100}), StatusCode::BAD_REQUEST, "invalid_parameter"),
        (json!({"type": "functional", "intensity": 1.5}), StatusCode::BAD_REQUEST, "invalid_parameter"),
        (json!({"type": "dance"}), StatusCode::BAD_REQUEST, "unknown_mode_type"),
        (json!({"type": "idle", "extra": 1}), StatusCode::BAD_REQUEST, "malformed_body"),
    ];
    for (body, status, code) in cases {
        let (got, v) = call(&app, "POST", "/api/mode", Some(body.clone())).await;
        assert_eq!((got, v["error"].as_str().unwrap()), (status, code), "{body}");
        assert!(v["message"].as_str().is_some_and(|m| !m.is_empty()));
    }
    let (got, v) = post_raw(&app, "/api/mode", "{not json").await;
    assert_eq!((got, v["error"].as_str().unwrap()), (StatusCode::BAD_REQUEST, "malformed_body"));
}

#[tokio::test]
async fn catalog_lists_everything() {
    let (app, _h, _) = app(false);
    let (status, v) = call(&app, "GET", "/api/catalog", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["active"].as_array().unwrap().len(), 16);
    assert!(v["ocular"].as_array().unwrap().len() >= 12);
    assert!(v["active"].as_array().unwrap().iter().any(|e| e["id"] == "Stay"));
}

#[tokio::test]
async fn gaze_up_lights_the_top_of_the_inner_ring() {
    // what a dual-ring view would draw: the brightest inner disc sits at 90 deg
    let (app, h, sim) = app(false);
    let (status, _) = call(&app, "POST", "/api/mode", Some(json!({"type": "ocular", "angle": 90}))).await;
    assert_eq!(status, StatusCode::OK);
    let state = h.advance(15).await.unwrap();
    assert_eq!(state.mode.angle, Some(90));
    for eye in EyeId::BOTH {
        let frame = sim.snapshot(eye).frame;
        let up = estimate_gaze(&frame).unwrap();
        assert!((up - 90.0).abs() <= 1.0, "{eye}: {up}");
        // the lit pupil arc is centred on index 4
        let top = frame.get(LedAddress::new(Ring::Inner, 4).unwrap()).a;
        assert!(top > 0 && (0..16).all(|i| frame.get(LedAddress::new(Ring::Inner, i).unwrap()).a <= top));
    }
}

#[tokio::test]
async fn sequences_are_seeded_permutations() {
    let mut orders = Vec::new();
    for _ in 0..2 {
        let (app, _h, _) = app(false);
        let body = json!({"ids": ["Stay", "GoUp", "Danger", "WaitCMD"], "dwell_ms": 500, "randomize": true, "seed": 7});
        let (status, v) = call(&app, "POST", "/api/sequence", Some(body)).await;
        assert_eq!(status, StatusCode::OK, "{v}");
        assert_eq!(v["state"]["sequence"]["total"], 4);
        orders.push(v["order"].clone());
    }
    assert_eq!(orders[0], orders[1]);
    let mut got: Vec<String> = serde_json::from_value(orders[0].clone()).unwrap();
    got.sort();
    assert_eq!(got, ["Danger", "GoUp", "Stay", "WaitCMD"]);

    let (app, _h, _) = app(false);
    let (status, v) = call(&app, "POST", "/api/sequence", Some(json!({"ids": ["Nope"], "dwell_ms": 100}))).await;
    assert_eq!((status, v["error"].as_str().unwrap()), (StatusCode::NOT_FOUND, "unknown_luceme"));
}

#[tokio::test]
async fn frames_stream_as_server_sent_events() {
    let (app, _h, _) = app(true);
    let resp = app.oneshot(Request::get("/api/frames").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert!(resp.headers()["content-type"].to_str().unwrap().starts_with("text/event-stream"));
    let mut body = resp.into_body();
    let mut text = String::new();
    tokio::time::timeout(Duration::from_secs(5), async {
        while !text.contains("\n\n") {
            let frame = body.frame().await.unwrap().unwrap();
            if let Some(data) = frame.data_ref() {
                text.push_str(std::str::from_utf8(data).unwrap());
            }
        }
    })
    .await
    .expect("no frame event within 5 s");
    assert!(text.contains("event: frame"), "{text}");
    let data = text.lines().find_map(|l| l.strip_prefix("data: ")).unwrap();
    let ev: Value = serde_json::from_str(data).unwrap();
    assert_eq!(ev["pixels"].as_array().unwrap().len(), 40);
    assert!(ev["eye"] == "left" || ev["eye"] == "right");
}

#[tokio::test]
async fn stopped_scheduler_reports_unavailable() {
    // a handle whose scheduler runtime is gone
    let handle = std::thread::spawn(|| {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async {
            let session = Session::new(Catalog::default(), 30, Device::None).unwrap();
            service::spawn_scheduler(session, None, SchedulerConfig { realtime: false })
        })
    })
    .join()
    .unwrap();
    let app = service::router(handle, None);
    let (status, v) = call(&app, "POST", "/api/mode", Some(json!({"type": "idle"}))).await;
    assert_eq!((status, v["error"].as_str().unwrap()), (StatusCode::SERVICE_UNAVAILABLE, "scheduler_stopped"));
}
