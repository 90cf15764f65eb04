use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tracing::info;

use crate::store::{ReviewError, ReviewStore, Verdict, DEFAULT_PAGE_SIZE};

impl ReviewError {
    pub fn status_code(&self) -> StatusCode {
        match self {
            ReviewError::UnknownRun(_) | ReviewError::UnknownWord(_) => StatusCode::NOT_FOUND,
            ReviewError::InvalidTransition { .. }
            | ReviewError::NothingToPromote
            | ReviewError::NoPromotedList(_)
            | ReviewError::Busy(_) => StatusCode::CONFLICT,
            ReviewError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ReviewError::Core(euphemism::Error::Config(_)) => StatusCode::BAD_REQUEST,
            ReviewError::Core(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ReviewError {
    fn into_response(self) -> Response {
        (self.status_code(), Json(json!({ "error": self.to_string() }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ReviewError>;

#[derive(Debug, Deserialize)]
struct PageQuery {
    page: Option<usize>,
    page_size: Option<usize>,
}

#[derive(Debug, Deserialize)]
pub struct VerdictRequest {
    pub word: String,
    pub verdict: Verdict,
    pub mapped_keyword: Option<String>,
    pub reviewer: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
pub struct RerunRequest {
    #[serde(default)]
    pub overrides: BTreeMap<String, serde_json::Value>,
}

/// Routes over `store`. Blocking file work runs on the blocking pool.
pub fn router(store: ReviewStore) -> Router {
    Router::new()
        .route("/runs", get(runs))
        .route("/runs/{id}/candidates", get(candidates))
        .route("/runs/{id}/candidates/{word}", get(candidate))
        .route("/runs/{id}/verdicts", post(verdict))
        .route("/runs/{id}/promote", post(promote))
        .route("/runs/{id}/rerun", post(rerun))
        .route("/runs/{id}/status", get(status))
        .with_state(store)
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ReviewError> + Send + 'static,
) -> Result<T, ReviewError> {
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(ReviewError::Validation(format!("worker failed: {e}"))))
}

async fn runs(State(store): State<ReviewStore>) -> ApiResult<serde_json::Value> {
    let runs = blocking(move || store.list_runs()).await?;
    Ok(Json(json!({ "runs": runs })))
}

async fn candidates(
    State(store): State<ReviewStore>,
    Path(id): Path<String>,
    Query(q): Query<PageQuery>,
) -> ApiResult<crate::store::CandidatePage> {
    let page = q.page.unwrap_or(1);
    let size = q.page_size.unwrap_or(DEFAULT_PAGE_SIZE);
    Ok(Json(blocking(move || store.list_candidates(&id, page, size)).await?))
}

async fn candidate(
    State(store): State<ReviewStore>,
    Path((id, word)): Path<(String, String)>,
) -> ApiResult<crate::store::ReviewItem> {
    Ok(Json(blocking(move || store.get_candidate(&id, &word)).await?))
}

async fn verdict(
    State(store): State<ReviewStore>,
    Path(id): Path<String>,
    Json(req): Json<VerdictRequest>,
) -> ApiResult<crate::store::ReviewItem> {
    Ok(Json(
        blocking(move || {
            store.submit_verdict(
                &id,
                &req.word,
                req.verdict,
                req.mapped_keyword.as_deref(),
                req.reviewer.as_deref(),
            )
        })
        .await?,
    ))
}

async fn promote(State(store): State<ReviewStore>, Path(id): Path<String>) -> ApiResult<crate::store::Promotion> {
    Ok(Json(blocking(move || store.promote_confirmed(&id)).await?))
}

async fn rerun(
    State(store): State<ReviewStore>,
    Path(id): Path<String>,
    body: Option<Json<RerunRequest>>,
) -> Result<(StatusCode, Json<serde_json::Value>), ReviewError> {
    let overrides: BTreeMap<String, String> = body
        .map(|Json(b)| b.overrides)
        .unwrap_or_default()
        .into_iter()
        .map(|(k, v)| {
            let v = match v {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            };
            (k, v)
        })
        .collect();
    let prep_store = store.clone();
    let prep_id = id.clone();
    let config = blocking(move || prep_store.prepare_rerun(&prep_id, &overrides)).await?;
    let new_id = config.run_id.clone();
    info!(parent = %id, run = %new_id, "starting rerun");
    tokio::task::spawn_blocking(move || store.execute_rerun(&id, &config));
    Ok((StatusCode::ACCEPTED, Json(json!({ "run_id": new_id }))))
}

async fn status(State(store): State<ReviewStore>, Path(id): Path<String>) -> ApiResult<crate::store::RunStatus> {
    Ok(Json(blocking(move || store.status(&id)).await?))
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("no completed detection runs under {0}")]
    NoRuns(PathBuf),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Review(#[from] ReviewError),
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

/// Serves the review API for `runs_dir` on `addr` until the process exits.
pub async fn serve(runs_dir: PathBuf, addr: SocketAddr) -> Result<(), ServeError> {
    let store = ReviewStore::new(&runs_dir);
    let has_detection = store.list_runs()?.iter().any(|r| {
        r.stages.get("detect") == Some(&euphemism::pipeline::StageStatus::Complete)
    });
    if !has_detection {
        return Err(ServeError::NoRuns(runs_dir));
    }
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })?;
    info!(%addr, runs = %runs_dir.display(), "review service listening");
    axum::serve(listener, router(store)).await?;
    Ok(())
}
