//! HTTP front end of the versioned key-value store.
//!
//! | Method | Path               | Notes                                       |
//! |--------|--------------------|---------------------------------------------|
//! | GET    | `/kv/{key}`        | body = value, `ETag: <version>`             |
//! | PUT    | `/kv/{key}`        | optional `If-Match: <version>`              |
//! | DELETE | `/kv/{key}`        | optional `If-Match: <version>`              |
//! | GET    | `/kv?prefix=<p>`   | JSON array of `{key,value,version}`         |
//! | POST   | `/compact`         | rewrite the log, one entry per live key     |

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use bookstore_core::{ApiError, FlushPolicy, Store, StoreError};
use serde::Deserialize;
use serde_json::json;

use crate::http::{json, HttpError, HttpResult};
use crate::telemetry::{instrument, Telemetry};

#[derive(Debug, Clone)]
pub struct Config {
    pub port: u16,
    pub data_dir: PathBuf,
    pub flush: FlushPolicy,
}

impl Config {
    /// `PORT`, `DB_DIR` and optional `DB_FLUSH` (`always` or `batched`).
    pub fn from_env() -> Result<Self, String> {
        let flush = match std::env::var("DB_FLUSH") {
            Ok(v) => v.parse()?,
            Err(_) => FlushPolicy::EveryWrite,
        };
        Ok(Self {
            port: crate::env_port()?,
            data_dir: crate::env_var("DB_DIR")?.into(),
            flush,
        })
    }
}

fn store_error(e: StoreError) -> HttpError {
    match e {
        StoreError::Conflict { current } => {
            ApiError::conflict(format!("version mismatch, current version is {current}")).into()
        }
        StoreError::InvalidKey(msg) => ApiError::bad_request(msg).into(),
        other => ApiError::internal(other.to_string()).into(),
    }
}

fn if_match(headers: &HeaderMap) -> Result<Option<u64>, HttpError> {
    match headers.get("if-match") {
        None => Ok(None),
        Some(v) => v
            .to_str()
            .ok()
            .map(|s| s.trim().trim_matches('"'))
            .and_then(|s| s.parse().ok())
            .map(Some)
            .ok_or_else(|| ApiError::bad_request("If-Match must be an integer version").into()),
    }
}

async fn blocking<T, F>(f: F) -> HttpResult<T>
where
    F: FnOnce() -> Result<T, StoreError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| HttpError(ApiError::internal(e.to_string())))?
        .map_err(store_error)
}

async fn get_key(State(store): State<Arc<Store>>, Path(key): Path<String>) -> HttpResult<Response> {
    match store.get(&key) {
        Some((value, version)) => Ok((
            StatusCode::OK,
            [("etag", version.to_string())],
            value,
        )
            .into_response()),
        None => Err(ApiError::not_found(format!("no record under {key:?}")).into()),
    }
}

async fn put_key(
    State(store): State<Arc<Store>>,
    Path(key): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> HttpResult<Response> {
    let expected = if_match(&headers)?;
    let value = String::from_utf8(body.to_vec())
        .map_err(|_| HttpError(ApiError::bad_request("value must be UTF-8")))?;
    let version = blocking(move || store.put(&key, &value, expected)).await?;
    Ok(json(StatusCode::OK, &json!({ "version": version })))
}

async fn delete_key(
    State(store): State<Arc<Store>>,
    Path(key): Path<String>,
    headers: HeaderMap,
) -> HttpResult<Response> {
    let expected = if_match(&headers)?;
    blocking(move || store.delete(&key, expected)).await?;
    Ok(json(StatusCode::OK, &json!({ "deleted": true })))
}

#[derive(Deserialize)]
struct ScanQuery {
    #[serde(default)]
    prefix: String,
}

async fn scan(State(store): State<Arc<Store>>, Query(q): Query<ScanQuery>) -> Response {
    json(StatusCode::OK, &store.scan(&q.prefix))
}

async fn compact(State(store): State<Arc<Store>>) -> HttpResult<Response> {
    blocking(move || store.compact()).await?;
    Ok(json(StatusCode::OK, &json!({ "compacted": true })))
}

pub fn router(store: Arc<Store>) -> Router {
    let gauges = Arc::clone(&store);
    let wal = Arc::clone(&store);
    let telemetry = Arc::new(
        Telemetry::new()
            .with_gauge("datastore_keys", move || gauges.len() as f64)
            .with_gauge("datastore_wal_entries", move || wal.wal_entries() as f64),
    );
    let app = Router::new()
        .route("/kv", get(scan))
        .route("/kv/{*key}", get(get_key).put(put_key).delete(delete_key))
        .route("/compact", post(compact))
        .with_state(store);
    instrument(app, telemetry)
}

/// Opens the store (replaying its log) and only then starts serving.
pub async fn run(config: Config) -> Result<(), String> {
    let store = Store::open_with(&config.data_dir, config.flush)
        .map_err(|e| format!("cannot open {}: {e}", config.data_dir.display()))?;
    tracing::info!(
        dir = %config.data_dir.display(),
        keys = store.len(),
        flush = config.flush.as_str(),
        "datastore replayed"
    );
    crate::serve(router(Arc::new(store)), config.port)
        .await
        .map_err(|e| format!("serve on port {}: {e}", config.port))
}
