//! HTTP front ends of the bookstore.
//!
//! Every service speaks JSON over HTTP/1.1, reports errors with the shared
//! `{"code":…,"message":…}` envelope and exposes `GET /health` and
//! `GET /metrics`. Each module owns one service: a `Config` read from the
//! environment and a `router` that can be mounted on any listener, which is
//! how the tests run the services in-process.

pub mod books;
pub mod clients;
pub mod datastore;
pub mod http;
pub mod local;
pub mod orders;
pub mod password;
pub mod stub;
pub mod telemetry;
pub mod ui;
pub mod users;

use std::net::SocketAddr;

use axum::Router;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

/// Reads a required environment variable.
pub fn env_var(name: &str) -> Result<String, String> {
    std::env::var(name).map_err(|_| format!("environment variable {name} is not set"))
}

pub fn env_port() -> Result<u16, String> {
    let raw = env_var("PORT")?;
    raw.parse()
        .map_err(|_| format!("PORT must be a TCP port, got {raw:?}"))
}

/// Binds `127.0.0.1:port` and serves `router` until the process ends.
pub async fn serve(router: Router, port: u16) -> std::io::Result<()> {
    let listener = TcpListener::bind(("127.0.0.1", port)).await?;
    axum::serve(listener, router).await
}

/// Serves `router` on an ephemeral local port in the background.
pub async fn spawn_local(router: Router) -> std::io::Result<(SocketAddr, JoinHandle<()>)> {
    let listener = TcpListener::bind(("127.0.0.1", 0)).await?;
    let addr = listener.local_addr()?;
    let handle = tokio::spawn(async move {
        let _ = axum::serve(listener, router).await;
    });
    Ok((addr, handle))
}
