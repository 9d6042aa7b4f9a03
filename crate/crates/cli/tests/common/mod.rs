#![allow(dead_code)]

use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Duration;

use bookstore_conductor::{AdminClient, Conductor, Config};
use rand::Rng;

/// Directory holding the workspace binaries built for this test run.
pub fn bin_dir() -> PathBuf {
    Path::new(env!("CARGO_BIN_EXE_bookstore-stub")).parent().unwrap().to_path_buf()
}

pub fn deploy_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../deploy")
}

/// Start of `len` consecutive ports that are free right now.
pub fn free_block(len: u16) -> u16 {
    let mut rng = rand::rng();
    loop {
        let base = rng.random_range(20_000..(60_000 - len));
        if (0..len).all(|i| TcpListener::bind(("127.0.0.1", base + i)).is_ok()) {
            return base;
        }
    }
}

/// Replica port base with room for a few deployments.
pub fn free_replica_base() -> u16 {
    let mut rng = rand::rng();
    loop {
        let base = rng.random_range(200..550) * 100;
        if (0..600).step_by(7).all(|i| TcpListener::bind(("127.0.0.1", base + i)).is_ok()) {
            return base;
        }
    }
}

pub async fn conductor(root: &Path) -> (Conductor, AdminClient) {
    let c = Conductor::start(Config {
        admin_port: 0,
        data_root: root.to_path_buf(),
        replica_port_base: free_replica_base(),
        bin_dirs: vec![bin_dir()],
    })
    .await
    .unwrap();
    let admin = AdminClient::new(format!("http://{}", c.admin_addr));
    (c, admin)
}

/// One stub deployment named `stub`, optionally behind a service.
pub fn stub_manifest(replicas: u32, delay_ms: u64, service_port: Option<u16>) -> String {
    let mut m = format!(
        "deployment stub\n  replicas {replicas}\n  exec bookstore-stub\n  env STARTUP_DELAY_MS={delay_ms}\nend\n"
    );
    if let Some(port) = service_port {
        m.push_str(&format!("service stub\n  listen {port}\n  target stub\nend\n"));
    }
    m
}

pub async fn wait_ready(admin: &AdminClient, replicas: usize) -> bookstore_conductor::ClusterState {
    let (ok, state) = admin
        .wait_for(Duration::from_secs(20), |s| {
            s.deployment("stub").is_some_and(|d| d.ready() == replicas)
        })
        .await
        .unwrap();
    assert!(ok, "stub never reached {replicas} Ready: {state:?}");
    state
}

/// A copy of the shipped deployment directory whose ports are all free.
pub struct Shipped {
    pub dir: tempfile::TempDir,
    pub admin_port: u16,
    pub replica_base: u16,
    pub service_base: u16,
}

impl Shipped {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let src = deploy_dir();
        let service_base = free_block(6);
        let mut manifest = std::fs::read_to_string(src.join("bookstore.manifest")).unwrap();
        for i in 0..5u16 {
            manifest = manifest.replace(&(7100 + i).to_string(), &(service_base + i).to_string());
        }
        std::fs::write(dir.path().join("bookstore.manifest"), manifest).unwrap();
        std::fs::copy(src.join("catalog.csv"), dir.path().join("catalog.csv")).unwrap();
        std::fs::create_dir_all(dir.path().join("ui/dist")).unwrap();
        std::fs::copy(src.join("ui/dist/index.html"), dir.path().join("ui/dist/index.html")).unwrap();
        Self {
            dir,
            admin_port: service_base + 5,
            replica_base: free_replica_base(),
            service_base,
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn url(&self, service: &str) -> String {
        let offset = ["datastore", "users", "books", "orders", "ui"]
            .iter()
            .position(|s| *s == service)
            .unwrap() as u16;
        format!("http://127.0.0.1:{}", self.service_base + offset)
    }

    pub fn bench(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_bench"))
            .args(args)
            .current_dir(self.dir.path())
            .env("CONDUCTOR_ADMIN_PORT", self.admin_port.to_string())
            .env("CONDUCTOR_REPLICA_PORT_BASE", self.replica_base.to_string())
            .env_remove("CONDUCTOR_DATA_ROOT")
            .output()
            .unwrap()
    }

    pub fn admin(&self) -> AdminClient {
        AdminClient::local(self.admin_port)
    }
}

impl Drop for Shipped {
    fn drop(&mut self) {
        let _ = self.bench(&["down"]);
    }
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

pub fn text(out: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    )
}

impl Shipped {
    pub fn admin_reachable(&self) -> bool {
        std::net::TcpStream::connect(("127.0.0.1", self.admin_port)).is_ok()
    }
}
