use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use deepview_core::classifier::ClassifierSpec;
use deepview_core::pipeline::RunConfig;
use deepview_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::store::{Project, ProjectStore, RunStart, RunState};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown {what} {id:?}"))
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = if e.is_transport() {
            StatusCode::BAD_GATEWAY
        } else {
            StatusCode::BAD_REQUEST
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub(crate) fn router(store: Arc<ProjectStore>) -> Router {
    Router::new()
        .route("/api/projects", post(create_project))
        .route("/api/projects/{id}/runs", post(start_run))
        .route("/api/projects/{id}/runs/{run_id}", get(get_run))
        .route("/api/projects/{id}/runs/{run_id}/region-query", post(region_query))
        .route("/api/projects/{id}/points/{point_id}", get(get_point))
        .with_state(store)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

fn project(store: &ProjectStore, id: &str) -> ApiResult<Arc<Project>> {
    store.get(id).ok_or_else(|| ApiError::not_found("project", id))
}

#[derive(Debug, Deserialize)]
struct CreateProject {
    bundle_manifest: PathBuf,
    classifier_spec: String,
}

async fn create_project(State(store): State<Arc<ProjectStore>>, Json(req): Json<CreateProject>) -> ApiResult<Response> {
    let spec: ClassifierSpec = req.classifier_spec.parse()?;
    let created = blocking(move || store.create(&req.bundle_manifest, &spec)).await??;
    Ok((StatusCode::CREATED, Json(json!({ "project_id": created.id }))).into_response())
}

async fn start_run(
    State(store): State<Arc<ProjectStore>>,
    Path(id): Path<String>,
    Json(cfg): Json<RunConfig>,
) -> ApiResult<Response> {
    let project = project(&store, &id)?;
    cfg.validate()?;
    match store.begin_run(&project, &cfg) {
        RunStart::Busy(active) => Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("run {active} is still active for project {id}"),
        )),
        RunStart::AlreadyDone(run_id) => Ok((StatusCode::OK, Json(json!({ "run_id": run_id }))).into_response()),
        RunStart::Started(run_id) => {
            let rid = run_id.clone();
            tokio::task::spawn_blocking(move || store.execute(&project, &rid, &cfg));
            Ok((StatusCode::ACCEPTED, Json(json!({ "run_id": run_id }))).into_response())
        }
    }
}

async fn get_run(
    State(store): State<Arc<ProjectStore>>,
    Path((id, run_id)): Path<(String, String)>,
) -> ApiResult<Response> {
    let project = project(&store, &id)?;
    let state = project
        .run_state(&run_id)
        .ok_or_else(|| ApiError::not_found("run", &run_id))?;
    match state {
        RunState::Done => {
            let path = project.payload_path(&run_id);
            let bytes = blocking(move || std::fs::read(&path))
                .await?
                .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("payload unreadable: {e}")))?;
            Ok(([(header::CONTENT_TYPE, "application/json")], Body::from(bytes)).into_response())
        }
        RunState::Failed { message } => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, message)),
        pending => Ok((
            StatusCode::ACCEPTED,
            Json(json!({ "run_id": run_id, "state": pending })),
        )
            .into_response()),
    }
}

async fn get_point(
    State(store): State<Arc<ProjectStore>>,
    Path((id, point_id)): Path<(String, String)>,
) -> ApiResult<Response> {
    let project = project(&store, &id)?;
    let record = project
        .bundle
        .record_by_id(&point_id)
        .ok_or_else(|| ApiError::not_found("point", &point_id))?;
    Ok(Json(record.clone()).into_response())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionQuery {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionEntry {
    pub id: String,
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_label: Option<usize>,
    pub predicted: usize,
    pub mismatch: bool,
    pub certainty: f64,
}

async fn region_query(
    State(store): State<Arc<ProjectStore>>,
    Path((id, run_id)): Path<(String, String)>,
    Json(q): Json<RegionQuery>,
) -> ApiResult<Json<Vec<RegionEntry>>> {
    let project = project(&store, &id)?;
    if !(q.x_min <= q.x_max && q.y_min <= q.y_max) {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "inverted or empty region box"));
    }
    match project.run_state(&run_id) {
        None => return Err(ApiError::not_found("run", &run_id)),
        Some(RunState::Done) => {}
        Some(_) => {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                format!("run {run_id} has no payload"),
            ))
        }
    }
    let payload = blocking(move || project.load_payload(&run_id))
        .await?
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let mut hits: Vec<RegionEntry> = payload
        .points
        .iter()
        .filter(|p| (q.x_min..=q.x_max).contains(&p.x) && (q.y_min..=q.y_max).contains(&p.y))
        .map(|p| RegionEntry {
            id: p.id.clone(),
            x: p.x,
            y: p.y,
            true_label: p.true_label,
            predicted: p.predicted,
            mismatch: p.mismatch,
            certainty: payload.grid.certainty_at(p.x, p.y),
        })
        .collect();
    hits.sort_by(|a, b| a.certainty.total_cmp(&b.certainty).then_with(|| a.id.cmp(&b.id)));
    Ok(Json(hits))
}
