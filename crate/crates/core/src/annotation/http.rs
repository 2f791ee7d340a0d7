use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use super::{AnnotationService, ServiceError, Submission, SubmitOutcome};
use crate::corpus::FieldError;

pub type SharedService = Arc<Mutex<AnnotationService>>;

#[derive(Deserialize)]
struct AnnotatorQuery {
    #[serde(default)]
    annotator_id: String,
}

#[derive(Deserialize)]
struct NarrativeQuery {
    narrative_id: Option<String>,
}

fn error(status: StatusCode, message: impl std::fmt::Display) -> Response {
    (status, Json(json!({ "error": message.to_string() }))).into_response()
}

fn lock(state: &SharedService) -> std::sync::MutexGuard<'_, AnnotationService> {
    // a panicked handler cannot leave the store half-written: appends are a
    // single write followed by the index update
    state.lock().unwrap_or_else(|p| p.into_inner())
}

async fn next_task(State(state): State<SharedService>, Query(q): Query<AnnotatorQuery>) -> Response {
    match lock(&state).next_task(&q.annotator_id) {
        Ok(Some(task)) => Json(task).into_response(),
        Ok(None) => StatusCode::NO_CONTENT.into_response(),
        Err(e @ ServiceError::EmptyAnnotator) => error(StatusCode::BAD_REQUEST, e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn submit(State(state): State<SharedService>, body: Result<Json<Submission>, JsonRejection>) -> Response {
    let submission = match body {
        Ok(Json(s)) => s,
        Err(e) => {
            let errors = vec![FieldError {
                field: "body".into(),
                message: e.body_text(),
            }];
            return (StatusCode::UNPROCESSABLE_ENTITY, Json(json!({ "errors": errors }))).into_response();
        }
    };
    let record = submission.into_record(chrono::Utc::now());
    match lock(&state).submit(record) {
        Ok(SubmitOutcome::Accepted(r)) => (StatusCode::CREATED, Json(r)).into_response(),
        Ok(SubmitOutcome::Unchanged(r)) => (StatusCode::OK, Json(r)).into_response(),
        Err(errors) => (StatusCode::UNPROCESSABLE_ENTITY, Json(json!({ "errors": errors }))).into_response(),
    }
}

async fn annotations(State(state): State<SharedService>, Query(q): Query<NarrativeQuery>) -> Response {
    let service = lock(&state);
    let records: Vec<_> = match &q.narrative_id {
        Some(id) => service.store().for_narrative(id).into_iter().cloned().collect(),
        None => service.store().latest_records().into_iter().cloned().collect(),
    };
    Json(records).into_response()
}

async fn agreement(State(state): State<SharedService>) -> Response {
    match lock(&state).agreement_snapshot() {
        Ok(snapshot) => Json(snapshot).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn progress(State(state): State<SharedService>) -> Response {
    Json(lock(&state).progress()).into_response()
}

pub fn router(state: SharedService) -> Router {
    Router::new()
        .route("/api/tasks/next", get(next_task))
        .route("/api/annotations", get(annotations).post(submit))
        .route("/api/agreement", get(agreement))
        .route("/api/progress", get(progress))
        .with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(state: SharedService, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("annotation service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
