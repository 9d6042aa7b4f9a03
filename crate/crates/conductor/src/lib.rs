//! Desk-scale orchestrator for the bookstore.
//!
//! Replicas are local processes. The conductor applies a [`Manifest`],
//! supervises each replica with HTTP health probes, restarts failures with
//! exponential backoff, routes each service port round-robin over Ready
//! replicas, provisions volume directories and autoscales on CPU.
//!
//! Replica `i` of the deployment at manifest position `k` listens on
//! `replica_port_base + 100*k + i` and sees `PORT`, `REPLICA_ID`,
//! `DEPLOYMENT` and `VOLUME_<CLAIM>` in its environment; manifest `env`
//! values may reference those as `${NAME}`.

pub mod admin;
pub mod client;
pub mod env;
pub mod proxy;
mod runtime;
pub mod state;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use bookstore_core::{ApiError, Manifest};
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinHandle;

pub use client::AdminClient;
pub use state::{ApplySummary, ClusterState, DeploymentState, ReplicaState};

/// Replica slots reserved per deployment in the port plan.
pub const MAX_REPLICAS: u32 = 100;
pub const DEFAULT_ADMIN_PORT: u16 = 7000;
pub const DEFAULT_REPLICA_PORT_BASE: u16 = 20000;

#[derive(Debug, Clone)]
pub struct Config {
    pub admin_port: u16,
    pub data_root: PathBuf,
    pub replica_port_base: u16,
    /// Prepended to `PATH` for replica commands.
    pub bin_dirs: Vec<PathBuf>,
}

impl Config {
    /// `CONDUCTOR_ADMIN_PORT`, `CONDUCTOR_DATA_ROOT`,
    /// `CONDUCTOR_REPLICA_PORT_BASE`; binaries next to the current
    /// executable are put on the replicas' `PATH`.
    pub fn from_env() -> Result<Self, String> {
        let port = |name: &str, default: u16| -> Result<u16, String> {
            match std::env::var(name) {
                Ok(v) => v.parse().map_err(|_| format!("{name} must be a TCP port, got {v:?}")),
                Err(_) => Ok(default),
            }
        };
        let data_root = std::env::var("CONDUCTOR_DATA_ROOT").unwrap_or_else(|_| "bookstore-data".into());
        let bin_dirs = std::env::current_exe()
            .ok()
            .and_then(|p| p.parent().map(PathBuf::from))
            .into_iter()
            .collect();
        Ok(Self {
            admin_port: port("CONDUCTOR_ADMIN_PORT", DEFAULT_ADMIN_PORT)?,
            data_root: PathBuf::from(data_root),
            replica_port_base: port("CONDUCTOR_REPLICA_PORT_BASE", DEFAULT_REPLICA_PORT_BASE)?,
            bin_dirs,
        })
    }
}

/// Cloneable handle to the control loop.
#[derive(Clone)]
pub struct Handle {
    tx: mpsc::Sender<runtime::Msg>,
}

fn stopped() -> ApiError {
    ApiError::unavailable("conductor is shutting down")
}

impl Handle {
    async fn ask<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> runtime::Msg) -> Result<T, ApiError> {
        let (reply, rx) = oneshot::channel();
        self.tx.send(make(reply)).await.map_err(|_| stopped())?;
        rx.await.map_err(|_| stopped())
    }

    pub async fn apply(&self, manifest: Manifest) -> Result<ApplySummary, ApiError> {
        self.ask(|r| runtime::Msg::Apply(manifest, r)).await?
    }

    pub async fn scale(&self, deployment: &str, replicas: u32) -> Result<(), ApiError> {
        self.ask(|r| runtime::Msg::Scale(deployment.to_string(), replicas, r)).await?
    }

    /// Hard-kills a Ready or Unhealthy replica; returns the kill time in ms.
    pub async fn kill(&self, deployment: &str, index: u32) -> Result<u64, ApiError> {
        self.ask(|r| runtime::Msg::Kill(deployment.to_string(), index, r)).await?
    }

    pub async fn state(&self) -> Result<ClusterState, ApiError> {
        self.ask(runtime::Msg::State).await
    }

    /// Stops every replica and ends the control loop.
    pub async fn shutdown(&self) -> Result<(), ApiError> {
        self.ask(runtime::Msg::Shutdown).await
    }
}

/// A conductor running inside the current process.
pub struct Conductor {
    pub handle: Handle,
    pub admin_addr: SocketAddr,
    admin: JoinHandle<()>,
    control: JoinHandle<()>,
}

impl Conductor {
    /// Starts the control loop and the admin API (port 0 picks a free port).
    pub async fn start(config: Config) -> std::io::Result<Self> {
        std::fs::create_dir_all(&config.data_root)?;
        let probe = config.data_root.join(".write-test");
        std::fs::write(&probe, b"")?;
        std::fs::remove_file(&probe)?;

        let listener = tokio::net::TcpListener::bind(("127.0.0.1", config.admin_port)).await?;
        let admin_addr = listener.local_addr()?;
        let (tx, rx) = mpsc::channel(1024);
        let ready = Arc::new(proxy::ReadySets::default());
        let control = tokio::spawn(runtime::Runtime::new(config, ready, tx.clone()).run(rx));
        let handle = Handle { tx };
        let app = admin::router(handle.clone());
        let admin = tokio::spawn(async move {
            let _ = axum::serve(listener, app).await;
        });
        Ok(Self {
            handle,
            admin_addr,
            admin,
            control,
        })
    }

    /// Resolves once the control loop has ended (after a shutdown request).
    pub async fn wait(self) {
        let _ = self.control.await;
        self.admin.abort();
    }

    pub async fn stop(self) {
        let _ = self.handle.shutdown().await;
        self.wait().await;
    }
}
