//! Admin HTTP API.
//!
//! | Method | Path        | Body                                 | Reply              |
//! |--------|-------------|--------------------------------------|--------------------|
//! | POST   | `/apply`    | manifest text                        | [`ApplySummary`]   |
//! | GET    | `/state`    |                                      | [`ClusterState`]   |
//! | POST   | `/scale`    | `{"deployment":…,"replicas":n}`      | `{"ok":true}`      |
//! | POST   | `/kill`     | `{"deployment":…,"index":i}`         | `{"killed_at_ms"}` |
//! | POST   | `/shutdown` |                                      | `{"ok":true}`      |
//!
//! [`ApplySummary`]: crate::ApplySummary
//! [`ClusterState`]: crate::ClusterState

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::Response;
use axum::routing::{get, post};
use axum::Router;
use bookstore_core::{ApiError, Manifest};
use bookstore_services::http::{json, parse_body, HttpResult};
use serde_json::json;

use crate::state::{KillRequest, KillResponse, ScaleRequest};
use crate::Handle;

async fn apply(State(h): State<Handle>, body: Bytes) -> HttpResult<Response> {
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("manifest must be UTF-8"))?;
    let manifest = Manifest::parse(text).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(json(StatusCode::OK, &h.apply(manifest).await?))
}

async fn state(State(h): State<Handle>) -> HttpResult<Response> {
    Ok(json(StatusCode::OK, &h.state().await?))
}

async fn scale(State(h): State<Handle>, body: Bytes) -> HttpResult<Response> {
    let req: ScaleRequest = parse_body(&body)?;
    h.scale(&req.deployment, req.replicas).await?;
    Ok(json(StatusCode::OK, &json!({ "ok": true })))
}

async fn kill(State(h): State<Handle>, body: Bytes) -> HttpResult<Response> {
    let req: KillRequest = parse_body(&body)?;
    let killed_at_ms = h.kill(&req.deployment, req.index).await?;
    Ok(json(StatusCode::OK, &KillResponse { killed_at_ms }))
}

async fn shutdown(State(h): State<Handle>) -> HttpResult<Response> {
    h.shutdown().await?;
    Ok(json(StatusCode::OK, &json!({ "ok": true })))
}

async fn health() -> Response {
    json(StatusCode::OK, &json!({ "status": "ok" }))
}

pub fn router(handle: Handle) -> Router {
    Router::new()
        .route("/apply", post(apply))
        .route("/state", get(state))
        .route("/scale", post(scale))
        .route("/kill", post(kill))
        .route("/shutdown", post(shutdown))
        .route("/health", get(health))
        .with_state(handle)
}
