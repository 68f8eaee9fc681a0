//! Annotation HTTP API over one [`AnnotationSession`].
//!
//! All bodies are JSON except the frame image (PNG) and the annotation file,
//! which is served back byte for byte as it was stored.

use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use stentrecon_core::pipeline::{AnnotationSession, PatchRequest, PipelineError, SessionError};

pub type SharedSession = Arc<Mutex<AnnotationSession>>;

pub fn router(session: AnnotationSession) -> Router {
    let state: SharedSession = Arc::new(Mutex::new(session));
    Router::new()
        .route("/frames", get(list_frames))
        .route("/frames/{i}", get(get_frame))
        .route("/frames/{i}/image", get(get_image))
        .route("/frames/{i}/patch", post(post_patch))
        .route("/flattened", get(get_flattened))
        .route("/annotations", get(get_annotations).put(put_annotations))
        .route("/commit", post(commit))
        .with_state(state)
}

pub struct ApiError(SessionError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let msg = self.0.to_string();
        let status = match self.0 {
            SessionError::NotFound(_) => StatusCode::NOT_FOUND,
            SessionError::Conflict(current) => {
                return (StatusCode::CONFLICT, Json(json!({ "error": msg, "current": current }))).into_response();
            }
            SessionError::Invalid(_) => StatusCode::BAD_REQUEST,
            SessionError::Pipeline(PipelineError::Dependency { .. }) => StatusCode::FAILED_DEPENDENCY,
            SessionError::Pipeline(PipelineError::Validation(_)) => StatusCode::UNPROCESSABLE_ENTITY,
            SessionError::Pipeline(PipelineError::Input(_)) => StatusCode::BAD_REQUEST,
        };
        (status, Json(json!({ "error": msg }))).into_response()
    }
}

/// Run `f` on the session off the async workers; commits can take a while.
async fn with_session<T, F>(s: SharedSession, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&mut AnnotationSession) -> Result<T, SessionError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || {
        let mut guard = s.lock().unwrap_or_else(|p| p.into_inner());
        f(&mut guard)
    })
    .await
    .expect("session task panicked")
    .map_err(ApiError)
}

async fn list_frames(State(s): State<SharedSession>) -> Result<Response, ApiError> {
    let (frames, versions) = with_session(s, |s| Ok((s.frame_indices(), s.versions()))).await?;
    Ok(Json(json!({ "frames": frames, "versions": versions })).into_response())
}

async fn get_frame(State(s): State<SharedSession>, Path(i): Path<usize>) -> Result<Response, ApiError> {
    let frame = with_session(s, move |s| s.frame(i)).await?;
    Ok(Json(frame).into_response())
}

async fn get_image(State(s): State<SharedSession>, Path(i): Path<usize>) -> Result<Response, ApiError> {
    let png = with_session(s, move |s| s.frame_png(i)).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn post_patch(
    State(s): State<SharedSession>,
    Path(i): Path<usize>,
    Json(req): Json<PatchRequest>,
) -> Result<Response, ApiError> {
    let frame = with_session(s, move |s| s.patch(i, &req)).await?;
    Ok(Json(frame).into_response())
}

async fn get_flattened(State(s): State<SharedSession>) -> Result<Response, ApiError> {
    let view = with_session(s, |s| s.flattened()).await?;
    Ok(Json(view).into_response())
}

async fn get_annotations(State(s): State<SharedSession>) -> Result<Response, ApiError> {
    let bytes = with_session(s, |s| Ok(s.annotations().to_vec())).await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

async fn put_annotations(State(s): State<SharedSession>, body: Bytes) -> Result<Response, ApiError> {
    with_session(s, move |s| s.put_annotations(&body)).await?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

async fn commit(State(s): State<SharedSession>) -> Result<Response, ApiError> {
    let report = with_session(s, |s| s.commit()).await?;
    Ok(Json(report).into_response())
}
