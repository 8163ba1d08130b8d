//! HTTP JSON service over the design store and the job registry.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use origami_core::catapult::{binned_csv, heatmap_csv};
use origami_core::design::{Actuation, DesignError, DofMask, EdgeKind, KeypointId, Panel, FREE};
use origami_core::geometry::{Vec2, Vec3};
use origami_core::mesh::detect_panel;
use origami_core::CreasePattern;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::ApiError;
use crate::jobs::{JobKind, JobRegistry, FRAMES_FILE};
use crate::pipeline::{
    self, ExportSettings, OptimizeSettings, SimulateSettings, SweepSettings, SCHEMA_VERSION,
};
use crate::store::{check_id, DesignStore};

/// Frames returned per page when the client gives no limit.
pub const DEFAULT_FRAME_LIMIT: usize = 100;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<DesignStore>,
    pub jobs: Arc<JobRegistry>,
}

impl AppState {
    /// Designs live in `data_dir/designs`, jobs in `data_dir/jobs`.
    pub fn open(data_dir: &Path, workers: usize) -> Result<Self, ApiError> {
        Ok(AppState {
            store: Arc::new(DesignStore::open(data_dir.join("designs"))?),
            jobs: JobRegistry::open(data_dir.join("jobs"), workers)?,
        })
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, [(header::CONTENT_TYPE, "application/json")], self.to_json()).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/designs", post(create_design))
        .route("/designs/{id}", get(get_design))
        .route("/designs/{id}/keypoints", post(add_keypoint))
        .route("/designs/{id}/edges", post(add_edge))
        .route("/designs/{id}/merge", post(merge))
        .route("/designs/{id}/panel-detect", post(panel_detect))
        .route("/designs/{id}/mesh", get(mesh))
        .route("/designs/{id}/export", post(export))
        .route("/jobs/simulate", post(submit_simulate))
        .route("/jobs/sweep", post(submit_sweep))
        .route("/jobs/optimize", post(submit_optimize))
        .route("/jobs/{id}", get(get_job))
        .route("/jobs/{id}/frames", get(get_frames))
        .fallback(|| async { ApiError::not_found("route", "unknown") })
        .with_state(state)
}

/// Run the service until interrupted.
pub fn serve_blocking(port: u16, data_dir: &Path, workers: usize) -> Result<(), ApiError> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| ApiError::internal(e.to_string()))?;
    runtime.block_on(async {
        let state = AppState::open(data_dir, workers)?;
        let addr = SocketAddr::from(([0, 0, 0, 0], port));
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("listening on {}", listener.local_addr()?);
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return pipeline::parse_json("{}");
    }
    let text = std::str::from_utf8(bytes).map_err(|e| ApiError::bad_input("MalformedJson", e.to_string()))?;
    pipeline::parse_json(text)
}

fn json_response(status: StatusCode, value: Value) -> Response {
    (status, Json(value)).into_response()
}

fn design_error(e: DesignError, id: &str) -> ApiError {
    match e {
        DesignError::Parse(m) => ApiError::bad_input("MalformedDesign", m),
        other => ApiError::domain(&other),
    }
    .on(format!("design:{id}"))
}

async fn blocking<T: Send + 'static>(work: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(work)
        .await
        .unwrap_or_else(|e| Err(ApiError::internal(format!("worker panicked: {e}"))))
}

fn panel_json(panel: &Panel) -> Value {
    json!({
        "cycle": panel.cycle,
        "layout": panel.layout.iter().map(|(id, p)| json!({"id": id, "pos": [p.x, p.y]})).collect::<Vec<_>>(),
    })
}

fn design_summary(id: &str, pattern: &CreasePattern) -> Value {
    json!({
        "version": SCHEMA_VERSION,
        "id": id,
        "keypoints": pattern.keypoints().len(),
        "edges": pattern.edges().len(),
        "panels": pattern.panels().len(),
        "violations": pattern.validate(),
        "warnings": pattern.warnings(),
    })
}

/// Accepts `{"id": ..., "design": {...}}` or a bare design file, whose name
/// then serves as the id.
async fn create_design(State(state): State<AppState>, bytes: Bytes) -> ApiResult {
    let request: Value = body(&bytes)?;
    let (id, design) = match request.get("design") {
        Some(design) => (request.get("id").and_then(Value::as_str).map(str::to_string), design.clone()),
        None => (None, request),
    };
    let text = design.to_string();
    let pattern = CreasePattern::from_json(&text).map_err(|e| design_error(e, id.as_deref().unwrap_or("?")))?;
    let id = id.unwrap_or_else(|| pattern.name.clone());
    check_id(&id)?;
    let summary = design_summary(&id, &pattern);
    let created = state.store.put(&id, pattern)?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok(json_response(status, summary))
}

async fn get_design(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let pattern = state.store.snapshot(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], pattern.to_json()).into_response())
}

#[derive(Deserialize)]
struct KeypointRequest {
    /// (x, y) or (x, y, 0).
    pos: Vec<f64>,
    #[serde(default)]
    dof: Option<DofMask>,
    #[serde(default)]
    actuation: Option<Actuation>,
}

async fn add_keypoint(State(state): State<AppState>, UrlPath(id): UrlPath<String>, bytes: Bytes) -> ApiResult {
    let req: KeypointRequest = body(&bytes)?;
    let position = match req.pos[..] {
        [x, y] => Vec3::new(x, y, 0.0),
        [x, y, z] => Vec3::new(x, y, z),
        _ => return Err(ApiError::bad_input("BadPosition", "pos needs 2 or 3 numbers")),
    };
    let new_id = state.store.update(&id, |current| {
        let mut next = current.clone();
        let kp = next
            .add_keypoint(position, req.dof.unwrap_or(FREE), req.actuation)
            .map_err(|e| design_error(e, &id))?;
        Ok((next, kp))
    })?;
    Ok(json_response(StatusCode::CREATED, json!({"version": SCHEMA_VERSION, "id": new_id})))
}

#[derive(Deserialize)]
struct EdgeRequest {
    a: KeypointId,
    b: KeypointId,
    kind: EdgeKind,
}

async fn add_edge(State(state): State<AppState>, UrlPath(id): UrlPath<String>, bytes: Bytes) -> ApiResult {
    let req: EdgeRequest = body(&bytes)?;
    state.store.update(&id, |current| {
        let mut next = current.clone();
        next.add_edge(req.a, req.b, req.kind).map_err(|e| design_error(e, &id))?;
        Ok((next, ()))
    })?;
    Ok(json_response(
        StatusCode::CREATED,
        json!({"version": SCHEMA_VERSION, "edge": {"a": req.a, "b": req.b, "kind": req.kind}}),
    ))
}

#[derive(Deserialize)]
struct MergeRequest {
    survivor: KeypointId,
    victim: KeypointId,
}

async fn merge(State(state): State<AppState>, UrlPath(id): UrlPath<String>, bytes: Bytes) -> ApiResult {
    let req: MergeRequest = body(&bytes)?;
    let summary = state.store.update(&id, |current| {
        let next = current
            .merge_keypoints(req.survivor, req.victim)
            .map_err(|e| design_error(e, &id))?;
        let summary = design_summary(&id, &next);
        Ok((next, summary))
    })?;
    Ok(json_response(StatusCode::OK, summary))
}

fn yes() -> bool {
    true
}

#[derive(Deserialize)]
struct DetectRequest {
    click: [f64; 2],
    #[serde(default = "yes")]
    commit: bool,
}

async fn panel_detect(State(state): State<AppState>, UrlPath(id): UrlPath<String>, bytes: Bytes) -> ApiResult {
    let req: DetectRequest = body(&bytes)?;
    let click = Vec2::new(req.click[0], req.click[1]);
    let entity = format!("design:{id}");
    let detect = |pattern: &CreasePattern| detect_panel(pattern, click).map_err(|e| ApiError::domain(&e).on(entity.clone()));
    let (panel, index) = if req.commit {
        state.store.update(&id, |current| {
            let panel = detect(current)?;
            let mut next = current.clone();
            let index = next.push_panel(panel.clone());
            Ok((next, (panel, Some(index))))
        })?
    } else {
        (detect(&state.store.snapshot(&id)?)?, None)
    };
    Ok(json_response(
        StatusCode::OK,
        json!({"version": SCHEMA_VERSION, "panel": panel_json(&panel), "index": index}),
    ))
}

async fn mesh(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let pattern = state.store.snapshot(&id)?;
    let value = blocking(move || {
        let mesh = pipeline::mesh(&pattern).map_err(|e| e.on(format!("design:{id}")))?;
        Ok(pipeline::mesh_json(&pattern, &mesh))
    })
    .await?;
    Ok(json_response(StatusCode::OK, value))
}

async fn export(State(state): State<AppState>, UrlPath(id): UrlPath<String>, bytes: Bytes) -> ApiResult {
    let settings: ExportSettings = body(&bytes)?;
    let pattern = state.store.snapshot(&id)?;
    let doc = blocking(move || pipeline::export(&pattern, &settings).map_err(|e| e.on(format!("design:{id}")))).await?;
    Ok(([(header::CONTENT_TYPE, "application/xml")], doc.xml_text).into_response())
}

fn accepted(job_id: String) -> Response {
    json_response(StatusCode::ACCEPTED, json!({"version": SCHEMA_VERSION, "job_id": job_id}))
}

#[derive(Deserialize)]
struct SimulateRequest {
    design: String,
    #[serde(flatten)]
    settings: SimulateSettings,
}

/// The design is captured at submission; later edits do not affect the job.
async fn submit_simulate(State(state): State<AppState>, bytes: Bytes) -> ApiResult {
    let req: SimulateRequest = body(&bytes)?;
    let pattern = state.store.snapshot(&req.design)?;
    let settings = req.settings;
    let job = state.jobs.submit(
        JobKind::Simulate,
        Box::new(move |ctx| {
            let trajectory = pipeline::simulate(&pattern, &settings)?;
            std::fs::write(ctx.dir.join(FRAMES_FILE), trajectory.frames_text())?;
            Ok(pipeline::simulate_summary(&trajectory))
        }),
    )?;
    Ok(accepted(job))
}

async fn submit_sweep(State(state): State<AppState>, bytes: Bytes) -> ApiResult {
    let settings: SweepSettings = body(&bytes)?;
    let job = state.jobs.submit(
        JobKind::Sweep,
        Box::new(move |ctx| {
            let outcome = pipeline::sweep(&settings, &|f| ctx.progress(f))?;
            std::fs::write(ctx.dir.join("heatmap.csv"), heatmap_csv(&outcome.rows))?;
            std::fs::write(ctx.dir.join("bins.csv"), binned_csv(&outcome.bins))?;
            Ok(pipeline::sweep_summary(&outcome))
        }),
    )?;
    Ok(accepted(job))
}

async fn submit_optimize(State(state): State<AppState>, bytes: Bytes) -> ApiResult {
    let settings: OptimizeSettings = body(&bytes)?;
    let job = state.jobs.submit(
        JobKind::Optimize,
        Box::new(move |ctx| {
            let total = settings.generations.max(1) as f64;
            let result = pipeline::optimize(&settings, |g| ctx.progress((g.generation + 1) as f64 / total))?;
            pipeline::write_opt_result(&ctx.dir, &result)?;
            Ok(pipeline::opt_summary(&result))
        }),
    )?;
    Ok(accepted(job))
}

async fn get_job(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let record = state.jobs.get(&id)?;
    Ok(json_response(StatusCode::OK, serde_json::to_value(record).expect("json")))
}

#[derive(Deserialize)]
struct FrameQuery {
    from: Option<usize>,
    limit: Option<usize>,
}

async fn get_frames(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<FrameQuery>,
) -> ApiResult {
    let page = state
        .jobs
        .frames(&id, q.from.unwrap_or(0), q.limit.unwrap_or(DEFAULT_FRAME_LIMIT))?;
    Ok(json_response(StatusCode::OK, serde_json::to_value(page).expect("json")))
}
