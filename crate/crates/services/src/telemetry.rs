//! `/health`, `/metrics` and the request counters behind them.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use axum::extract::{Request, State};
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use bookstore_core::contracts::metrics;

type Gauge = Box<dyn Fn() -> f64 + Send + Sync>;

pub struct Telemetry {
    ready: AtomicBool,
    requests: AtomicU64,
    duration_us: AtomicU64,
    gauges: Vec<(&'static str, Gauge)>,
}

impl Default for Telemetry {
    fn default() -> Self {
        Self::new()
    }
}

impl Telemetry {
    pub fn new() -> Self {
        Self {
            ready: AtomicBool::new(true),
            requests: AtomicU64::new(0),
            duration_us: AtomicU64::new(0),
            gauges: Vec::new(),
        }
    }

    /// Adds a service-specific gauge rendered after the standard lines.
    pub fn with_gauge(mut self, name: &'static str, f: impl Fn() -> f64 + Send + Sync + 'static) -> Self {
        self.gauges.push((name, Box::new(f)));
        self
    }

    pub fn set_ready(&self, ready: bool) {
        self.ready.store(ready, Ordering::SeqCst);
    }

    pub fn is_ready(&self) -> bool {
        self.ready.load(Ordering::SeqCst)
    }

    pub fn requests_total(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    pub fn render(&self) -> String {
        let mut lines: Vec<(&str, f64)> = vec![
            ("up", 1.0),
            ("http_requests_total", self.requests.load(Ordering::Relaxed) as f64),
            (
                "http_request_duration_ms_sum",
                self.duration_us.load(Ordering::Relaxed) as f64 / 1000.0,
            ),
        ];
        for (name, f) in &self.gauges {
            lines.push((name, f()));
        }
        metrics::render(&lines)
    }
}

async fn count(State(t): State<Arc<Telemetry>>, req: Request, next: Next) -> Response {
    let started = Instant::now();
    let resp = next.run(req).await;
    t.requests.fetch_add(1, Ordering::Relaxed);
    t.duration_us
        .fetch_add(started.elapsed().as_micros() as u64, Ordering::Relaxed);
    resp
}

async fn health(State(t): State<Arc<Telemetry>>) -> Response {
    if t.is_ready() {
        (
            StatusCode::OK,
            [("content-type", "application/json")],
            r#"{"status":"ok"}"#,
        )
            .into_response()
    } else {
        (
            StatusCode::SERVICE_UNAVAILABLE,
            [("content-type", "application/json")],
            r#"{"status":"starting"}"#,
        )
            .into_response()
    }
}

async fn render(State(t): State<Arc<Telemetry>>) -> Response {
    (
        StatusCode::OK,
        [("content-type", "text/plain; version=0.0.4")],
        t.render(),
    )
        .into_response()
}

/// Adds `/health` and `/metrics` to `router` and counts every request.
pub fn instrument(router: Router, telemetry: Arc<Telemetry>) -> Router {
    router
        .merge(
            Router::new()
                .route("/health", get(health))
                .route("/metrics", get(render))
                .with_state(Arc::clone(&telemetry)),
        )
        .layer(middleware::from_fn_with_state(telemetry, count))
}
