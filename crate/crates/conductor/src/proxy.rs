//! Service ports: strict rotation over a deployment's Ready replicas.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::body::{to_bytes, Body, Bytes};
use axum::extract::{Request, State};
use axum::http::{HeaderMap, HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Router;
use bookstore_core::orchestrate::RoundRobin;
use bookstore_core::ApiError;
use bookstore_services::http::HttpError;

pub const REPLICA_HEADER: &str = "x-replica";
const MAX_BODY_BYTES: usize = 16 << 20;
const UPSTREAM_TIMEOUT: Duration = Duration::from_secs(30);

const HOP_BY_HOP: [&str; 9] = [
    "connection",
    "keep-alive",
    "proxy-authenticate",
    "proxy-authorization",
    "te",
    "trailer",
    "transfer-encoding",
    "upgrade",
    "host",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Backend {
    pub index: u32,
    pub port: u16,
}

/// Ready replicas per deployment, republished by the control loop whenever
/// the set changes. Readers take a cheap `Arc` snapshot.
#[derive(Default)]
pub struct ReadySets {
    sets: RwLock<HashMap<String, Arc<Vec<Backend>>>>,
}

impl ReadySets {
    pub fn get(&self, deployment: &str) -> Arc<Vec<Backend>> {
        self.sets
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(deployment)
            .cloned()
            .unwrap_or_default()
    }

    pub fn publish(&self, deployment: &str, backends: Vec<Backend>) {
        let mut sets = self.sets.write().unwrap_or_else(|e| e.into_inner());
        if sets.get(deployment).is_some_and(|cur| **cur == backends) {
            return;
        }
        sets.insert(deployment.to_string(), Arc::new(backends));
    }

    pub fn remove(&self, deployment: &str) {
        self.sets.write().unwrap_or_else(|e| e.into_inner()).remove(deployment);
    }
}

pub struct Route {
    pub deployment: String,
    ready: Arc<ReadySets>,
    rotation: RoundRobin,
    http: reqwest::Client,
}

impl Route {
    pub fn new(deployment: &str, ready: Arc<ReadySets>) -> Self {
        Self {
            deployment: deployment.to_string(),
            ready,
            rotation: RoundRobin::new(),
            http: reqwest::Client::builder()
                .timeout(UPSTREAM_TIMEOUT)
                .build()
                .expect("http client builds"),
        }
    }

    fn next(&self) -> Option<Backend> {
        let set = self.ready.get(&self.deployment);
        self.rotation.pick(set.len()).map(|i| set[i])
    }
}

fn forwardable(headers: &HeaderMap) -> HeaderMap {
    let mut out = headers.clone();
    for name in HOP_BY_HOP {
        out.remove(name);
    }
    out
}

async fn send(route: &Route, backend: Backend, parts: &axum::http::request::Parts, body: &Bytes) -> reqwest::Result<reqwest::Response> {
    let path = parts.uri.path_and_query().map_or("/", |p| p.as_str());
    let mut headers = forwardable(&parts.headers);
    headers.remove("content-length");
    route
        .http
        .request(parts.method.clone(), format!("http://127.0.0.1:{}{path}", backend.port))
        .headers(headers)
        .body(body.clone())
        .send()
        .await
}

fn relay(route: &Route, backend: Backend, upstream: reqwest::Response) -> Response {
    let status = upstream.status();
    let headers = forwardable(upstream.headers());
    let mut resp = Response::new(Body::from_stream(upstream.bytes_stream()));
    *resp.status_mut() = status;
    *resp.headers_mut() = headers;
    if let Ok(v) = HeaderValue::from_str(&format!("{}/{}", route.deployment, backend.index)) {
        resp.headers_mut().insert(HeaderName::from_static(REPLICA_HEADER), v);
    }
    resp
}

async fn forward(State(route): State<Arc<Route>>, req: Request) -> Response {
    let (parts, body) = req.into_parts();
    let body = match to_bytes(body, MAX_BODY_BYTES).await {
        Ok(b) => b,
        Err(e) => return HttpError(ApiError::bad_request(format!("request body: {e}"))).into_response(),
    };
    // One failover retry on the next replica in rotation.
    let mut last_error = None;
    for _ in 0..2 {
        let Some(backend) = route.next() else {
            break;
        };
        match send(&route, backend, &parts, &body).await {
            Ok(upstream) => return relay(&route, backend, upstream),
            Err(e) => {
                tracing::debug!(deployment = %route.deployment, index = backend.index, error = %e, "upstream failed");
                last_error = Some(e);
            }
        }
    }
    match last_error {
        None => HttpError(ApiError::unavailable(format!(
            "no ready replica of {}",
            route.deployment
        )))
        .into_response(),
        Some(e) => {
            let mut resp = HttpError(ApiError::unavailable(format!("upstream failed: {e}"))).into_response();
            *resp.status_mut() = StatusCode::BAD_GATEWAY;
            resp
        }
    }
}

pub fn router(route: Arc<Route>) -> Router {
    Router::new().fallback(forward).with_state(route)
}

#[cfg(test)]
mod tests {
    use super::*;
    use axum::routing::get;

    async fn backend(tag: &'static str) -> u16 {
        let app = Router::new().route("/who", get(move || async move { tag }));
        let (addr, _) = bookstore_services::spawn_local(app).await.unwrap();
        addr.port()
    }

    async fn front(route: Arc<Route>) -> String {
        let (addr, _) = bookstore_services::spawn_local(router(route)).await.unwrap();
        format!("http://{addr}")
    }

    #[tokio::test]
    async fn rotates_and_tags_replicas() {
        let ready = Arc::new(ReadySets::default());
        let ports = [backend("a").await, backend("b").await];
        ready.publish(
            "web",
            ports.iter().enumerate().map(|(i, &port)| Backend { index: i as u32, port }).collect(),
        );
        let base = front(Arc::new(Route::new("web", ready))).await;
        let mut seen = Vec::new();
        for _ in 0..4 {
            let r = reqwest::get(format!("{base}/who")).await.unwrap();
            seen.push(r.headers()[REPLICA_HEADER].to_str().unwrap().to_string());
        }
        assert_eq!(seen, ["web/0", "web/1", "web/0", "web/1"]);
    }

    #[tokio::test]
    async fn empty_set_is_503_and_dead_backends_502() {
        let ready = Arc::new(ReadySets::default());
        let base = front(Arc::new(Route::new("web", Arc::clone(&ready)))).await;
        let r = reqwest::get(format!("{base}/who")).await.unwrap();
        assert_eq!(r.status(), StatusCode::SERVICE_UNAVAILABLE);

        let dead = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        ready.publish("web", vec![Backend { index: 0, port: dead }]);
        let r = reqwest::get(format!("{base}/who")).await.unwrap();
        assert_eq!(r.status(), StatusCode::BAD_GATEWAY);
    }

    #[tokio::test]
    async fn failover_masks_one_dead_replica() {
        let ready = Arc::new(ReadySets::default());
        let live = backend("live").await;
        let dead = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        ready.publish("web", vec![Backend { index: 0, port: dead }, Backend { index: 1, port: live }]);
        let base = front(Arc::new(Route::new("web", ready))).await;
        for _ in 0..6 {
            let r = reqwest::get(format!("{base}/who")).await.unwrap();
            assert_eq!(r.status(), StatusCode::OK);
            assert_eq!(r.text().await.unwrap(), "live");
        }
    }
}
