//! `up` and `down`.

use std::fs::OpenOptions;
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use bookstore_conductor::{AdminClient, ClusterState};
use bookstore_core::{Manifest, Phase};

use crate::{runtime, usage, CmdResult, Failure};

const CONDUCTOR_START: Duration = Duration::from_secs(10);
const CONDUCTOR_STOP: Duration = Duration::from_secs(15);

fn sibling_binary(name: &str) -> Result<PathBuf, Failure> {
    let exe = std::env::current_exe().map_err(|e| runtime(format!("locate bench executable: {e}")))?;
    let path = exe.with_file_name(name);
    if path.is_file() {
        Ok(path)
    } else {
        Err(runtime(format!("{} not found next to bench", path.display())))
    }
}

/// Starts a detached conductor whose working directory is the manifest's.
fn spawn_conductor(admin_port: u16, workdir: &Path) -> Result<PathBuf, Failure> {
    let exe = sibling_binary("conductor")?;
    let data_root = workdir.join(std::env::var("CONDUCTOR_DATA_ROOT").unwrap_or_else(|_| "bookstore-data".into()));
    std::fs::create_dir_all(&data_root).map_err(|e| runtime(format!("{}: {e}", data_root.display())))?;
    let log_path = data_root.join("conductor.log");
    let log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| runtime(format!("{}: {e}", log_path.display())))?;
    let err_log = log.try_clone().map_err(|e| runtime(e.to_string()))?;
    Command::new(exe)
        .current_dir(workdir)
        .env("CONDUCTOR_ADMIN_PORT", admin_port.to_string())
        .env("CONDUCTOR_DATA_ROOT", &data_root)
        .stdin(Stdio::null())
        .stdout(Stdio::from(log))
        .stderr(Stdio::from(err_log))
        // Own process group, so a Ctrl-C aimed at bench leaves it running.
        .process_group(0)
        .spawn()
        .map_err(|e| runtime(format!("start conductor: {e}")))?;
    Ok(log_path)
}

fn phases(state: &ClusterState) -> String {
    let mut out = String::new();
    for d in &state.deployments {
        let mut line = format!("  {:<12} {}/{} ready:", d.name, d.ready(), d.desired);
        for r in d.replicas.iter().filter(|r| r.phase != Phase::Terminated) {
            line.push_str(&format!(" {}={:?}", r.index, r.phase));
            if let Some(e) = &r.last_error {
                line.push_str(&format!(" ({e})"));
            }
        }
        out.push_str(&line);
        out.push('\n');
    }
    out
}

fn service_table(state: &ClusterState) -> String {
    let mut out = format!("{:<12} {:<24} {:<12} {}\n", "service", "url", "target", "ready");
    for s in &state.services {
        let ready = state
            .deployment(&s.target)
            .map_or("-".to_string(), |d| format!("{}/{}", d.ready(), d.desired));
        out.push_str(&format!(
            "{:<12} {:<24} {:<12} {}\n",
            s.name,
            format!("http://127.0.0.1:{}", s.listen_port),
            s.target,
            ready
        ));
    }
    out
}

pub async fn up(admin: &AdminClient, admin_port: u16, manifest_path: &Path, timeout: u64) -> CmdResult {
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| usage(format!("{}: {e}", manifest_path.display())))?;
    let manifest = Manifest::parse(&text).map_err(|e| usage(format!("{}: {e}", manifest_path.display())))?;

    if !admin.reachable().await {
        let workdir = manifest_path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."))
            .canonicalize()
            .map_err(|e| usage(format!("{}: {e}", manifest_path.display())))?;
        let log = spawn_conductor(admin_port, &workdir)?;
        let started = Instant::now();
        while !admin.reachable().await {
            if started.elapsed() > CONDUCTOR_START {
                return Err(runtime(format!(
                    "conductor did not come up on port {admin_port}; see {}",
                    log.display()
                )));
            }
            tokio::time::sleep(Duration::from_millis(50)).await;
        }
    }

    admin
        .apply(&text)
        .await
        .map_err(|e| runtime(format!("apply: {}", e.message)))?;
    let names: Vec<String> = manifest.deployments.iter().map(|d| d.name.clone()).collect();
    let (ok, state) = admin
        .wait_for(Duration::from_secs(timeout), |s| {
            s.all_ready() && names.iter().all(|n| s.deployment(n).is_some())
        })
        .await
        .map_err(|e| runtime(format!("conductor: {}", e.message)))?;
    if !ok {
        return Err(runtime(format!(
            "not every deployment became Ready within {timeout}s:\n{}",
            phases(&state)
        )));
    }
    print!("{}", service_table(&state));
    Ok(())
}

pub async fn down(admin: &AdminClient) -> CmdResult {
    if !admin.reachable().await {
        println!("nothing running");
        return Ok(());
    }
    // The reply may be lost as the conductor exits; reachability decides.
    let _ = admin.shutdown().await;
    let started = Instant::now();
    while admin.reachable().await {
        if started.elapsed() > CONDUCTOR_STOP {
            return Err(runtime("conductor is still answering after shutdown"));
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    println!("stopped");
    Ok(())
}
