#[path = "../bin_support.rs"]
mod common;

use bookstore_conductor::{Conductor, Config};
use tokio::signal::unix::{signal, SignalKind};

#[tokio::main]
async fn main() {
    common::init_logging();
    let config = match Config::from_env() {
        Ok(c) => c,
        Err(e) => common::fail("conductor", e, 1),
    };
    let conductor = match Conductor::start(config.clone()).await {
        Ok(c) => c,
        Err(e) => common::fail("conductor", format!("admin port {}: {e}", config.admin_port), 2),
    };
    eprintln!("conductor: admin API on http://{}", conductor.admin_addr);
    let handle = conductor.handle.clone();
    tokio::spawn(async move {
        let mut term = signal(SignalKind::terminate()).expect("install SIGTERM handler");
        tokio::select! {
            _ = term.recv() => {}
            _ = tokio::signal::ctrl_c() => {}
        }
        let _ = handle.shutdown().await;
    });
    conductor.wait().await;
}
