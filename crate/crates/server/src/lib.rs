//! HTTP service for the browser runner: serves the experiment bundle and
//! collects session logs.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | GET | `/api/bundle` | | [`ExperimentBundle`] |
//! | POST | `/api/session` | [`NewSession`] | `{"id": ...}` |
//! | POST | `/api/session/{id}/records` | [`RecordBatch`] | [`store::Ingest`] |
//! | POST | `/api/session/{id}/questionnaire` | questionnaire | `{"ok": true}` |
//! | GET | `/api/session/{id}/report` | | analysis report of that session |
//! | GET | `/api/report` | | analysis report of all stored sessions |
//! | GET | `/api/assets/{file}` | | pre-rendered stimulus image |
//!
//! Errors are JSON `{"error": ..., "path": ...}` with status 400 (malformed
//! body, naming the offending field), 404 (unknown session) or 409
//! (conflicting duplicate or out-of-order record).

pub mod bundle;
pub mod store;

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use deadeye_core::protocol::{SessionMode, StrayInput, TrialRecord};
use deadeye_core::schema::parse_json;
use deadeye_core::session::{Participant, SessionHeader, LOG_SCHEMA_VERSION};
use deadeye_core::stats::{analyze, QuestionnaireResponse};
use deadeye_core::Error as CoreError;
use serde::{Deserialize, Serialize};

pub use bundle::ExperimentBundle;
use store::{Store, StoreError};

pub const DATA_DIR_ENV: &str = "DEADEYE_DATA_DIR";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewSession {
    pub participant: Participant,
    #[serde(default = "recorded")]
    pub mode: SessionMode,
}

fn recorded() -> SessionMode {
    SessionMode::Recorded
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordBatch {
    pub records: Vec<TrialRecord>,
    #[serde(default)]
    pub stray_inputs: Vec<StrayInput>,
}

#[derive(Clone)]
pub struct AppState {
    pub bundle: Arc<ExperimentBundle>,
    pub store: Arc<Store>,
    pub asset_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(bundle: ExperimentBundle, store: Store, asset_dir: Option<PathBuf>) -> Self {
        Self {
            bundle: Arc::new(bundle),
            store: Arc::new(store),
            asset_dir,
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    path: Option<String>,
}

impl ApiError {
    fn bad_request(path: Option<String>, message: String) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message,
            path,
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) => ApiError {
                status: StatusCode::NOT_FOUND,
                message: e.to_string(),
                path: None,
            },
            StoreError::Invalid { path, message } => ApiError::bad_request(Some(path), message),
            StoreError::Conflict(message) => ApiError {
                status: StatusCode::CONFLICT,
                message,
                path: None,
            },
            StoreError::Core(e) => e.into(),
        }
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Schema { path, message, .. } => ApiError::bad_request(Some(path), message),
            CoreError::Questionnaire { field, reason } => ApiError::bad_request(Some(field), reason),
            CoreError::Io { .. } => ApiError {
                status: StatusCode::INTERNAL_SERVER_ERROR,
                message: e.to_string(),
                path: None,
            },
            other => ApiError {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                message: other.to_string(),
                path: None,
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.message, "path": self.path });
        (self.status, axum::Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn json_text(text: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], text).into_response()
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/bundle", get(get_bundle))
        .route("/api/session", post(create_session))
        .route("/api/session/{id}/records", post(post_records))
        .route("/api/session/{id}/questionnaire", post(post_questionnaire))
        .route("/api/session/{id}/report", get(session_report))
        .route("/api/report", get(full_report))
        .route("/api/assets/{file}", get(get_asset))
        .with_state(state)
}

async fn get_bundle(State(st): State<AppState>) -> ApiResult<Response> {
    Ok(json_text(serde_json::to_string(&*st.bundle).map_err(CoreError::from)?))
}

async fn create_session(State(st): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: NewSession = parse_json(&String::from_utf8_lossy(&body), "session request")?;
    if req.participant.id.trim().is_empty() {
        return Err(ApiError::bad_request(
            Some("participant.id".into()),
            "participant id must not be empty".into(),
        ));
    }
    let plan = &st.bundle.plan;
    let header = SessionHeader {
        schema_version: LOG_SCHEMA_VERSION,
        participant: req.participant,
        mode: req.mode,
        experiment: plan.experiment,
        plan_seed: Some(plan.seed),
        expected_trials: plan.len(),
        timing: st.bundle.timing,
    };
    let id = uuid::Uuid::new_v4().simple().to_string();
    st.store.create(id.clone(), header)?;
    Ok((StatusCode::CREATED, axum::Json(serde_json::json!({ "id": id }))).into_response())
}

async fn post_records(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let session = st.store.get(&id)?;
    let batch: RecordBatch = parse_json(&String::from_utf8_lossy(&body), "records")?;
    let mut s = session.lock().await;
    let result = s.ingest(batch.records, batch.stray_inputs, &st.bundle.schedule)?;
    Ok(axum::Json(result).into_response())
}

async fn post_questionnaire(
    State(st): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let session = st.store.get(&id)?;
    let q: QuestionnaireResponse = parse_json(&String::from_utf8_lossy(&body), "questionnaire")?;
    session.lock().await.set_questionnaire(q)?;
    Ok(axum::Json(serde_json::json!({ "ok": true })).into_response())
}

async fn session_report(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let log = st.store.get(&id)?.lock().await.log();
    Ok(json_text(analyze(&[log])?.to_json()?))
}

async fn full_report(State(st): State<AppState>) -> ApiResult<Response> {
    let logs = st.store.logs().await;
    Ok(json_text(analyze(&logs)?.to_json()?))
}

async fn get_asset(State(st): State<AppState>, Path(file): Path<String>) -> ApiResult<Response> {
    let not_found = || ApiError {
        status: StatusCode::NOT_FOUND,
        message: format!("no asset {file}"),
        path: None,
    };
    let listed = st.bundle.assets.iter().any(|a| a.files.iter().any(|f| *f == file));
    let Some(dir) = st.asset_dir.as_ref().filter(|_| listed) else {
        return Err(not_found());
    };
    let bytes = tokio::fs::read(dir.join(&file)).await.map_err(|_| not_found())?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

/// Data directory from the environment, falling back to `./deadeye-data`.
pub fn data_dir_from_env() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("deadeye-data"))
}

/// Serves until the process is stopped.
pub async fn serve(state: AppState, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}
