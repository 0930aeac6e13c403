use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tdguard_core::procedure::{EvidencePayload, ProcedureSpec};
use tower_http::services::ServeDir;

use crate::{ServiceError, SessionService};

type Svc = State<Arc<SessionService>>;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, code) = match &self {
            ServiceError::Invalid(_) => (StatusCode::BAD_REQUEST, "invalid"),
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ServiceError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            ServiceError::OracleCap { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "oracle_cap"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        let mut body = json!({ "error": code, "message": self.to_string() });
        if let ServiceError::OracleCap { t, cap } = self {
            body["cap"] = json!(cap);
            body["t"] = json!(t);
        }
        (status, Json(body)).into_response()
    }
}

/// JSON body whose parse failures come back as our 400 shape.
struct Body<T>(T);

impl<S: Send + Sync, T: serde::de::DeserializeOwned> axum::extract::FromRequest<S> for Body<T> {
    type Rejection = ServiceError;

    async fn from_request(req: axum::extract::Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(e) => Err(ServiceError::Invalid(rejection_text(e))),
        }
    }
}

fn rejection_text(e: JsonRejection) -> String {
    e.body_text()
}

#[derive(Deserialize)]
struct CreateBody {
    spec: ProcedureSpec,
    #[serde(default)]
    request_token: Option<String>,
}

#[derive(Deserialize)]
struct DecisionBody {
    include: bool,
}

#[derive(Deserialize)]
struct WhatIfBody {
    subset: Vec<usize>,
}

#[derive(Deserialize)]
struct Since {
    #[serde(default)]
    since: u64,
}

async fn create(State(s): Svc, Body(b): Body<CreateBody>) -> Result<Response, ServiceError> {
    let c = s.create(b.spec, b.request_token)?;
    let status = if c.created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(c)).into_response())
}

async fn list(State(s): Svc) -> impl IntoResponse {
    Json(s.list())
}

async fn show(State(s): Svc, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(s.get(&id)?))
}

async fn evidence(State(s): Svc, Path(id): Path<String>, Body(p): Body<EvidencePayload>) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(s.submit_evidence(&id, &p)?))
}

async fn decision(State(s): Svc, Path(id): Path<String>, Body(b): Body<DecisionBody>) -> Result<impl IntoResponse, ServiceError> {
    let out = s.decide(&id, b.include)?;
    Ok(Json(json!({
        "t": out.t,
        "d": out.d,
        "included": out.included,
        "bound_incremented": out.bound_incremented,
        "removed_index": out.removed_index,
        "statistic": out.statistic,
        "query_size": out.query_size,
        "tdp_bound": out.tdp_bound(),
    })))
}

async fn whatif(State(s): Svc, Path(id): Path<String>, Body(b): Body<WhatIfBody>) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(s.what_if(&id, &b.subset)?))
}

async fn trace(State(s): Svc, Path(id): Path<String>, Query(q): Query<Since>) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(s.trace(&id, q.since)?))
}

async fn export(State(s): Svc, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], s.export_csv(&id)?))
}

/// HTTP routes; `static_dir`, when given, is served for every other path.
pub fn router(service: Arc<SessionService>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create).get(list))
        .route("/sessions/{id}", get(show))
        .route("/sessions/{id}/evidence", post(evidence))
        .route("/sessions/{id}/decision", post(decision))
        .route("/sessions/{id}/whatif", post(whatif))
        .route("/sessions/{id}/trace", get(trace))
        .route("/sessions/{id}/export.csv", get(export))
        .with_state(service);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}
