//! JSON-over-HTTP front end for [`SessionService`].

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use crate::service::{ExternalEvent, ServiceError, SessionService};
use seqchart_core::strategy::StrategySpec;

/// `strategy` in a create request: a bare strategy name or a full pipeline.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum StrategyField {
    Name(String),
    Pipeline(Vec<StrategySpec>),
}

#[derive(Debug, Deserialize)]
pub struct CreateRequest {
    pub course_id: String,
    #[serde(default)]
    pub strategy: Option<StrategyField>,
}

impl ServiceError {
    pub fn status_code(&self) -> StatusCode {
        match self {
            ServiceError::UnknownCourse(_) | ServiceError::SessionNotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::InvalidStrategy(_) | ServiceError::InvalidEvent(_) => StatusCode::BAD_REQUEST,
            ServiceError::SessionClosed { .. } | ServiceError::EventNotEnabled { .. } => StatusCode::CONFLICT,
            ServiceError::BadCourse { .. } | ServiceError::Storage(_) | ServiceError::Engine(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.to_string() });
        if let ServiceError::EventNotEnabled { available, .. } = &self {
            body["available_events"] = json!(available);
        }
        (self.status_code(), Json(body)).into_response()
    }
}

fn bad_request(message: String) -> Response {
    (StatusCode::BAD_REQUEST, Json(json!({ "error": message }))).into_response()
}

type Shared = Arc<SessionService>;

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/courses", get(list_courses))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(abandon_session))
        .route("/sessions/{id}/events", post(post_event))
        .route("/sessions/{id}/trace", get(get_trace))
        .with_state(service)
}

async fn list_courses(State(svc): State<Shared>) -> Response {
    match svc.courses() {
        Ok(list) => Json(list).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn create_session(State(svc): State<Shared>, body: Result<Json<CreateRequest>, JsonRejection>) -> Response {
    let Json(req) = match body {
        Ok(b) => b,
        Err(e) => return bad_request(e.body_text()),
    };
    let strategy = match req.strategy {
        None => Vec::new(),
        Some(StrategyField::Name(name)) => vec![StrategySpec {
            name,
            params: Default::default(),
        }],
        Some(StrategyField::Pipeline(specs)) => specs,
    };
    match svc.create_session(&req.course_id, strategy) {
        Ok(view) => (
            StatusCode::CREATED,
            Json(json!({ "session_id": view.session_id.clone(), "view": view })),
        )
            .into_response(),
        Err(e) => e.into_response(),
    }
}

async fn get_session(State(svc): State<Shared>, Path(id): Path<String>) -> Response {
    match svc.get_session(&id) {
        Ok(view) => Json(view).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn abandon_session(State(svc): State<Shared>, Path(id): Path<String>) -> Response {
    match svc.abandon(&id) {
        Ok(view) => Json(view).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn post_event(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<ExternalEvent>, JsonRejection>,
) -> Response {
    let Json(event) = match body {
        Ok(b) => b,
        Err(e) => return bad_request(e.body_text()),
    };
    match svc.post_event(&id, event) {
        Ok(view) => Json(view).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn get_trace(State(svc): State<Shared>, Path(id): Path<String>) -> Response {
    match svc.trace(&id) {
        Ok(text) => ([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response(),
        Err(e) => e.into_response(),
    }
}
