use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use origami_cli::server::{router, AppState};
use origami_core::fixtures;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(dir: &std::path::Path) -> Router {
    router(AppState::open(dir, 2).unwrap())
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call_raw(app, method, uri, body.map(|b| b.to_string())).await;
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

async fn call_raw(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Vec<u8>) {
    let request = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, Body::from))
        .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = axum::body::to_bytes(response.into_body(), usize::MAX).await.unwrap();
    (status, bytes.to_vec())
}

async fn upload_three_arm(app: &Router) {
    let design: Value = serde_json::from_str(&fixtures::three_arm().unwrap().to_json()).unwrap();
    let (status, body) = call(app, "POST", "/designs", Some(json!({"id": "three_arm", "design": design}))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert_eq!(body["violations"], json!([]));
}

/// Unit square 0-1-2-3 with boundary sides; no panels yet.
async fn square(app: &Router, id: &str) {
    let empty = json!({"version": 1, "name": id, "keypoints": [], "edges": [], "panels": []});
    let (status, body) = call(app, "POST", "/designs", Some(empty)).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    for pos in [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]] {
        let (status, _) = call(app, "POST", &format!("/designs/{id}/keypoints"), Some(json!({"pos": pos}))).await;
        assert_eq!(status, StatusCode::CREATED);
    }
    for (a, b, kind) in [(0, 1, "boundary"), (1, 2, "boundary"), (2, 3, "boundary"), (3, 0, "crease")] {
        let (status, body) = call(
            app,
            "POST",
            &format!("/designs/{id}/edges"),
            Some(json!({"a": a, "b": b, "kind": kind})),
        )
        .await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
    }
}

async fn wait_done(app: &Router, job: &str) -> Value {
    let mut last = -1.0;
    for _ in 0..3000 {
        let (status, record) = call(app, "GET", &format!("/jobs/{job}"), None).await;
        assert_eq!(status, StatusCode::OK);
        let progress = record["progress"].as_f64().unwrap();
        assert!(progress >= last, "progress went backwards");
        last = progress;
        if record["status"] == "done" || record["status"] == "failed" {
            return record;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("job {job} did not finish");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn designs_round_trip_through_the_service() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    upload_three_arm(&app).await;
    let (status, design) = call(&app, "GET", "/designs/three_arm", None).await;
    assert_eq!(status, StatusCode::OK);
    let back = origami_core::CreasePattern::from_json(&design.to_string()).unwrap();
    assert_eq!(back, fixtures::three_arm().unwrap());

    let (status, mesh) = call(&app, "GET", "/designs/three_arm/mesh", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(mesh["triangles"].as_array().unwrap().len(), 4);

    let (status, xml) = call_raw(&app, "POST", "/designs/three_arm/export", None).await;
    assert_eq!(status, StatusCode::OK);
    let xml = String::from_utf8(xml).unwrap();
    assert_eq!(xml.matches("<flex ").count(), 4);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn click_outside_every_region_is_unprocessable() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    square(&app, "sq").await;
    let (status, body) =
        call(&app, "POST", "/designs/sq/panel-detect", Some(json!({"click": [5.0, 5.0]}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "NoEnclosingCycle");
    assert_eq!(body["entity"], "design:sq");

    let (status, body) =
        call(&app, "POST", "/designs/sq/panel-detect", Some(json!({"click": [0.5, 0.5]}))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["index"], 0);
    assert_eq!(body["panel"]["cycle"].as_array().unwrap().len(), 4);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn errors_have_one_shape_and_the_right_status() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, body) = call_raw(&app, "POST", "/designs", Some("{not json".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let body: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(body["code"], "MalformedJson");

    let (status, body) = call(&app, "GET", "/designs/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["entity"], "design:nope");

    let (status, body) = call(&app, "GET", "/no/such/route", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "NotFound");

    square(&app, "sq").await;
    let (status, body) =
        call(&app, "POST", "/designs/sq/edges", Some(json!({"a": 0, "b": 1, "kind": "crease"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "DuplicateEdge");
    let (status, body) =
        call(&app, "POST", "/designs/sq/keypoints", Some(json!({"pos": [0.2, 0.2, 0.1]}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "OffPlane");

    let (status, body) = call(&app, "POST", "/jobs/sweep", Some(json!({"grid": [0, 3]}))).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let job = body["job_id"].as_str().unwrap().to_string();
    let record = wait_done(&app, &job).await;
    assert_eq!(record["status"], "failed");
    assert_eq!(record["error"]["code"], "BadGrid");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn simulate_job_runs_to_done_and_pages_its_frames() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    upload_three_arm(&app).await;
    let (status, body) = call(
        &app,
        "POST",
        "/jobs/simulate",
        Some(json!({"design": "three_arm", "max_time": 0.2, "early_stop": false})),
    )
    .await;
    assert_eq!(status, StatusCode::ACCEPTED, "{body}");
    let job = body["job_id"].as_str().unwrap().to_string();
    let record = wait_done(&app, &job).await;
    assert_eq!(record["status"], "done", "{record}");
    assert_eq!(record["kind"], "simulate");
    let expected = record["summary"]["frames"].as_u64().unwrap() as usize;
    assert!(expected > 3);

    let mut from = 0;
    let mut last_t = f64::NEG_INFINITY;
    let mut seen = 0;
    loop {
        let (status, page) = call(&app, "GET", &format!("/jobs/{job}/frames?from={from}&limit=3"), None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(page["from"], from);
        assert_eq!(page["total"], expected);
        assert!(page["done"].as_bool().unwrap());
        for frame in page["frames"].as_array().unwrap() {
            let t = frame["t"].as_f64().unwrap();
            assert!(t > last_t);
            last_t = t;
            seen += 1;
        }
        let next = page["next"].as_u64().unwrap() as usize;
        if next == from {
            break;
        }
        assert!(next > from);
        from = next;
    }
    assert_eq!(seen, expected);

    let (status, _) = call(&app, "GET", "/jobs/job-999/frames", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn optimize_job_writes_its_result_files() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (_, body) = call(
        &app,
        "POST",
        "/jobs/optimize",
        Some(json!({"generations": 2, "population": 4, "max_time": 0.3})),
    )
    .await;
    let job = body["job_id"].as_str().unwrap().to_string();
    let record = wait_done(&app, &job).await;
    assert_eq!(record["status"], "done", "{record}");
    assert_eq!(record["progress"], 1.0);
    let out = std::path::PathBuf::from(record["result"].as_str().unwrap());
    assert!(out.join("result.json").is_file());
    assert!(out.join("trajectory.csv").is_file());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn panel_detection_is_linearizable_with_edits() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let whole = json!([0, 1, 2, 3]);
    let half = json!([0, 1, 2]);
    for round in 0..40 {
        let id = format!("sq{round}");
        square(&app, &id).await;
        let edit = {
            let (app, id) = (app.clone(), id.clone());
            tokio::spawn(async move {
                call(&app, "POST", &format!("/designs/{id}/edges"), Some(json!({"a": 0, "b": 2, "kind": "crease"})))
                    .await
            })
        };
        let readers: Vec<_> = (0..4)
            .map(|k| {
                let (app, id) = (app.clone(), id.clone());
                tokio::spawn(async move {
                    let commit = k == 0;
                    call(
                        &app,
                        "POST",
                        &format!("/designs/{id}/panel-detect"),
                        Some(json!({"click": [0.7, 0.2], "commit": commit})),
                    )
                    .await
                })
            })
            .collect();
        let (status, _) = edit.await.unwrap();
        assert_eq!(status, StatusCode::CREATED);
        let mut committed = None;
        for (k, reader) in readers.into_iter().enumerate() {
            let (status, body) = reader.await.unwrap();
            if status == StatusCode::UNPROCESSABLE_ENTITY {
                // A read ordered after the commit sees the panel as taken.
                assert_eq!(body["code"], "PanelAlreadyDefined", "{body}");
                continue;
            }
            assert_eq!(status, StatusCode::OK, "{body}");
            let cycle = body["panel"]["cycle"].clone();
            assert!(cycle == whole || cycle == half, "torn read: {cycle}");
            if k == 0 {
                committed = Some(cycle);
            }
        }
        let (_, design) = call(&app, "GET", &format!("/designs/{id}"), None).await;
        assert_eq!(design["edges"].as_array().unwrap().len(), 5);
        let panels = design["panels"].as_array().unwrap();
        assert_eq!(panels.len(), 1);
        let stored = panels[0].get("cycle").unwrap_or(&panels[0]).clone();
        assert_eq!(Some(stored), committed, "{design}");
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn designs_persist_across_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    upload_three_arm(&app(dir.path())).await;
    let again = app(dir.path());
    let (status, _) = call(&again, "GET", "/designs/three_arm", None).await;
    assert_eq!(status, StatusCode::OK);
}
