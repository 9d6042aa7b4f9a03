//! Static host for the storefront bundle.
//!
//! Serves the built single-page app from `UI_DIR` and tells it where the
//! gateway lives through `GET /config`; the bundle never hard-codes URLs.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use serde::{Deserialize, Serialize};
use tower_http::services::{ServeDir, ServeFile};

use crate::http::json;
use crate::telemetry::{instrument, Telemetry};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UiConfig {
    pub gateway_base_url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub books_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub users_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orders_url: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Config {
    pub port: u16,
    pub dir: PathBuf,
    pub client: UiConfig,
}

impl Config {
    /// `PORT`, `UI_DIR`, `GATEWAY_BASE_URL` and optional per-service
    /// `BOOKS_URL`, `USERS_URL`, `ORDERS_URL`.
    pub fn from_env() -> Result<Self, String> {
        let opt = |name: &str| std::env::var(name).ok();
        Ok(Self {
            port: crate::env_port()?,
            dir: crate::env_var("UI_DIR")?.into(),
            client: UiConfig {
                gateway_base_url: crate::env_var("GATEWAY_BASE_URL")?,
                books_url: opt("BOOKS_URL"),
                users_url: opt("USERS_URL"),
                orders_url: opt("ORDERS_URL"),
            },
        })
    }
}

async fn client_config(State(cfg): State<Arc<UiConfig>>) -> Response {
    json(StatusCode::OK, cfg.as_ref())
}

pub fn router(config: &Config) -> Router {
    let index = config.dir.join("index.html");
    let assets = ServeDir::new(&config.dir).fallback(ServeFile::new(index));
    let app = Router::new()
        .route("/config", get(client_config))
        .with_state(Arc::new(config.client.clone()))
        .fallback_service(assets);
    instrument(app, Arc::new(Telemetry::new()))
}

pub async fn run(config: Config) -> Result<(), String> {
    if !config.dir.is_dir() {
        return Err(format!("UI_DIR {} is not a directory", config.dir.display()));
    }
    crate::serve(router(&config), config.port)
        .await
        .map_err(|e| format!("serve on port {}: {e}", config.port))
}
