//! Synthetic service used to calibrate measurements.
//!
//! It sleeps `STARTUP_DELAY_MS` before binding its port, so the time from
//! launch to a passing health check is known in advance. With `SPIN=1` a
//! background thread burns one core for the process lifetime.

use std::sync::Arc;
use std::time::Duration;

use axum::http::StatusCode;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use serde_json::json;

use crate::http::json;
use crate::telemetry::{instrument, Telemetry};

#[derive(Debug, Clone, Default)]
pub struct Config {
    pub port: u16,
    pub startup_delay: Duration,
    pub spin: bool,
    pub replica_id: String,
}

impl Config {
    /// `PORT`, optional `STARTUP_DELAY_MS`, `SPIN` and `REPLICA_ID`.
    pub fn from_env() -> Result<Self, String> {
        let delay_ms = match std::env::var("STARTUP_DELAY_MS") {
            Ok(v) => v
                .parse::<u64>()
                .map_err(|_| format!("STARTUP_DELAY_MS must be an integer, got {v:?}"))?,
            Err(_) => 0,
        };
        let spin = matches!(std::env::var("SPIN").as_deref(), Ok("1" | "true" | "yes"));
        Ok(Self {
            port: crate::env_port()?,
            startup_delay: Duration::from_millis(delay_ms),
            spin,
            replica_id: std::env::var("REPLICA_ID").unwrap_or_default(),
        })
    }
}

pub fn router(replica_id: &str) -> Router {
    let id = replica_id.to_string();
    let app = Router::new().route(
        "/",
        get(move || {
            let id = id.clone();
            async move { json(StatusCode::OK, &json!({ "service": "stub", "replica": id })) as Response }
        }),
    );
    instrument(app, Arc::new(Telemetry::new()))
}

/// Burns one core until the process exits.
pub fn spin_forever() {
    std::thread::spawn(|| {
        let mut x: u64 = 0;
        loop {
            x = std::hint::black_box(x.wrapping_mul(6364136223846793005).wrapping_add(1));
        }
    });
}

pub async fn run(config: Config) -> Result<(), String> {
    if config.spin {
        spin_forever();
    }
    tokio::time::sleep(config.startup_delay).await;
    crate::serve(router(&config.replica_id), config.port)
        .await
        .map_err(|e| format!("serve on port {}: {e}", config.port))
}
