//! HTTP JSON API over the session store.

use crate::state::{state_doc, StateDoc};
use crate::store::{Entry, SessionStore, StoreError};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use tilewise::cost::MachineParams;
use tilewise::exec::{execute, FuncCounters};
use tilewise::gen::random_inputs;
use tilewise::guide::{Choice, GuideError};

/// Largest image, in pixels, the run endpoint executes.
pub const MAX_RUN_PIXELS: i64 = 1 << 20;

pub type AppState = Arc<SessionStore>;

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    Conflict(String),
    Unprocessable(String),
    Internal(String),
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let msg = e.to_string();
        match e {
            StoreError::NotFound(_) => ApiError::NotFound(msg),
            StoreError::Guide(GuideError::Schedule(_)) | StoreError::Pipeline(_) | StoreError::Machine(_) => {
                ApiError::Unprocessable(msg)
            }
            StoreError::Guide(_) => ApiError::Conflict(msg),
            StoreError::Io(_) => ApiError::Internal(msg),
        }
    }
}

impl From<GuideError> for ApiError {
    fn from(e: GuideError) -> Self {
        StoreError::Guide(e).into()
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, error) = match self {
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, m),
            ApiError::Unprocessable(m) => (StatusCode::UNPROCESSABLE_ENTITY, m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (status, Json(ErrorBody { error })).into_response()
    }
}

#[derive(Debug, Deserialize)]
pub struct CreateRequest {
    pub pipeline_source: String,
    #[serde(default)]
    pub machine: Option<MachineParams>,
}

#[derive(Debug, Serialize)]
pub struct CreateResponse {
    pub session_id: String,
    pub state: StateDoc,
}

#[derive(Debug, Deserialize)]
pub struct ChooseRequest {
    pub option_id: String,
}

#[derive(Debug, Deserialize)]
pub struct TileRequest {
    pub range_x: i64,
    pub range_y: i64,
}

#[derive(Debug, Deserialize)]
pub struct RunQuery {
    pub size: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct RunResponse {
    pub width: i64,
    pub height: i64,
    pub counters: Vec<FuncCounters>,
    pub total_evaluations: i64,
    pub wall_time: f64,
}

pub fn router(store: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create).get(list))
        .route("/sessions/{id}", get(show))
        .route("/sessions/{id}/choose", post(choose))
        .route("/sessions/{id}/tile", post(tile))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/schedule", get(schedule))
        .route("/sessions/{id}/run", get(run))
        .with_state(store)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn create(
    State(store): State<AppState>,
    Json(req): Json<CreateRequest>,
) -> Result<(StatusCode, Json<CreateResponse>), ApiError> {
    blocking(move || {
        let (session_id, handle) = store.create(&req.pipeline_source, req.machine)?;
        let state = state_doc(&handle.lock().expect("session lock").session);
        Ok((StatusCode::CREATED, Json(CreateResponse { session_id, state })))
    })
    .await
}

async fn list(State(store): State<AppState>) -> Json<Vec<String>> {
    Json(store.ids())
}

async fn show(State(store): State<AppState>, Path(id): Path<String>) -> Result<Json<StateDoc>, ApiError> {
    blocking(move || {
        let handle = store.get(&id)?;
        let entry = handle.lock().expect("session lock");
        Ok(Json(state_doc(&entry.session)))
    })
    .await
}

/// Applies `f` under the session lock, persists, and returns the new state.
async fn mutate(
    store: AppState,
    id: String,
    f: impl FnOnce(&mut Entry) -> Result<(), GuideError> + Send + 'static,
) -> Result<Json<StateDoc>, ApiError> {
    blocking(move || {
        let handle = store.get(&id)?;
        let mut entry = handle.lock().expect("session lock");
        f(&mut entry)?;
        store.persist(&id, &entry)?;
        Ok(Json(state_doc(&entry.session)))
    })
    .await
}

async fn choose(
    State(store): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<ChooseRequest>,
) -> Result<Json<StateDoc>, ApiError> {
    mutate(store, id, move |e| e.session.apply(&Choice::Option { option_id: req.option_id })).await
}

async fn tile(
    State(store): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<TileRequest>,
) -> Result<Json<StateDoc>, ApiError> {
    mutate(store, id, move |e| e.session.apply(&Choice::Tile { range_x: req.range_x, range_y: req.range_y })).await
}

async fn undo(State(store): State<AppState>, Path(id): Path<String>) -> Result<Json<StateDoc>, ApiError> {
    mutate(store, id, |e| e.session.undo()).await
}

async fn schedule(State(store): State<AppState>, Path(id): Path<String>) -> Result<String, ApiError> {
    let handle = store.get(&id)?;
    let text = handle.lock().expect("session lock").session.export_schedule();
    Ok(text)
}

pub fn parse_size(text: &str) -> Option<(i64, i64)> {
    let (w, h) = text.split_once('x')?;
    let (w, h) = (w.trim().parse::<i64>().ok()?, h.trim().parse::<i64>().ok()?);
    (w > 0 && h > 0).then_some((w, h))
}

async fn run(
    State(store): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<RunQuery>,
) -> Result<Json<RunResponse>, ApiError> {
    blocking(move || {
        let handle = store.get(&id)?;
        let (pipeline, schedule) = {
            let entry = handle.lock().expect("session lock");
            (entry.session.pipeline().clone(), entry.session.schedule().clone())
        };
        let (width, height) = match &q.size {
            Some(s) => {
                parse_size(s).ok_or_else(|| ApiError::Unprocessable(format!("size `{s}` is not WIDTHxHEIGHT")))?
            }
            None => pipeline.image_size(),
        };
        if width.saturating_mul(height) > MAX_RUN_PIXELS {
            return Err(ApiError::Unprocessable(format!("{width}x{height} exceeds the {MAX_RUN_PIXELS} pixel limit")));
        }
        let pipeline = pipeline.with_size(width, height);
        let inputs = random_inputs(&pipeline, 0);
        let run = execute(&pipeline, &schedule, &inputs).map_err(|e| ApiError::Unprocessable(e.to_string()))?;
        Ok(Json(RunResponse {
            width,
            height,
            total_evaluations: run.report.total_evaluations(),
            counters: run.report.funcs,
            wall_time: run.report.wall_time,
        }))
    })
    .await
}
