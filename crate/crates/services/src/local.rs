//! All data services wired together in one process on ephemeral ports.
//!
//! Used by integration tests and the acceptance suite; the real deployment
//! runs each service as its own process under the conductor.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use bookstore_core::{FlushPolicy, Store};
use tokio::task::JoinHandle;

use crate::{books, datastore, orders, spawn_local, users};

/// Iterations low enough to keep test logins fast.
pub const TEST_HASH_ITERATIONS: u32 = 1_000;

pub struct LocalStack {
    pub datastore: String,
    pub users: String,
    pub books: String,
    pub orders: String,
    pub store: Arc<Store>,
    handles: Vec<JoinHandle<()>>,
}

fn url(addr: SocketAddr) -> String {
    format!("http://{addr}")
}

impl LocalStack {
    pub async fn start(data_dir: &Path) -> std::io::Result<Self> {
        let store = Arc::new(
            Store::open_with(data_dir, FlushPolicy::Batched)
                .map_err(|e| std::io::Error::other(e.to_string()))?,
        );
        let mut handles = Vec::new();
        let (addr, h) = spawn_local(datastore::router(Arc::clone(&store))).await?;
        handles.push(h);
        let ds = url(addr);
        let (addr, h) = spawn_local(users::router(&users::Config {
            port: 0,
            datastore_url: ds.clone(),
            hash_iterations: TEST_HASH_ITERATIONS,
            session_ttl_ms: users::SESSION_TTL_MS,
        }))
        .await?;
        handles.push(h);
        let us = url(addr);
        let (addr, h) = spawn_local(books::router(&books::Config {
            port: 0,
            datastore_url: ds.clone(),
            users_url: us.clone(),
        }))
        .await?;
        handles.push(h);
        let bk = url(addr);
        let (addr, h) = spawn_local(orders::router(&orders::Config {
            port: 0,
            datastore_url: ds.clone(),
            users_url: us.clone(),
            books_url: bk.clone(),
        }))
        .await?;
        handles.push(h);
        Ok(Self {
            datastore: ds,
            users: us,
            books: bk,
            orders: url(addr),
            store,
            handles,
        })
    }
}

impl Drop for LocalStack {
    fn drop(&mut self) {
        for h in &self.handles {
            h.abort();
        }
    }
}
