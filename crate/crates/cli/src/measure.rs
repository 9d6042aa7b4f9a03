//! `bench`, `boot-time` and `footprint`.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use bookstore_conductor::{AdminClient, ClusterState};
use bookstore_core::Phase;
use bookstore_harness::artifacts::{
    append_csv, latency_rows, records_path, resource_rows, write_samples, ReportRow, REPORT_CSV, REPORT_TXT, SAMPLES_CSV,
};
use bookstore_harness::compare::{Comparison, RunData};
use bookstore_harness::host::HostInfo;
use bookstore_harness::{
    generate_load, measure_boot_time, measure_footprint, summarize, HarnessError, KillHook, LifecycleHooks, LoadProfile,
    SamplePoint, SampleTarget, Sampler,
};
use tokio::sync::watch;

use crate::seed::{credentials, Api};
use crate::{cluster_state, create_out_dir, runtime, service_url, usage, CmdResult, Failure};

const SAMPLE_INTERVAL: Duration = Duration::from_secs(1);
const DEFAULT_LOAD_SERVICES: [&str; 3] = ["books", "orders", "ui"];

/// Endpoint loaded for each service: its primary list route.
fn default_endpoint(service: &str) -> &'static str {
    match service {
        "books" => "/books",
        "orders" => "/orders",
        "ui" => "/",
        _ => "/health",
    }
}

fn sample_targets(state: &ClusterState) -> Vec<SampleTarget> {
    state
        .deployments
        .iter()
        .flat_map(|d| d.replicas.iter())
        .filter(|r| r.phase == Phase::Ready)
        .filter_map(|r| {
            r.pid.map(|pid| SampleTarget {
                deployment: r.deployment.clone(),
                replica: r.index,
                pid,
            })
        })
        .collect()
}

fn harness_failure(e: HarnessError) -> Failure {
    match e {
        HarnessError::Path { .. } | HarnessError::Profile(_) => usage(e.to_string()),
        _ => runtime(e.to_string()),
    }
}

/// Appends rows to `report.csv` and a titled table to `report.txt`.
fn write_report(out: &Path, title: &str, header: &[String], rows: &[ReportRow]) -> CmdResult {
    append_csv(&out.join(REPORT_CSV), rows).map_err(harness_failure)?;
    let mut text = format!("== {title}\n");
    for line in header {
        let _ = writeln!(text, "{line}");
    }
    text.push_str(&Comparison::single(&RunData::new(title, rows.to_vec())).render_text());
    text.push('\n');
    let path = out.join(REPORT_TXT);
    std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    print!("{text}");
    Ok(())
}

fn cpu_note() -> String {
    "cpu_percent: 100 = one core; reference limits are 2 cores / 2 GB per target".to_string()
}

/// Samples every second until `stop` flips.
async fn sample_until(targets: Vec<SampleTarget>, mut stop: watch::Receiver<bool>) -> Vec<SamplePoint> {
    let mut sampler = Sampler::new(&targets);
    let mut points = Vec::new();
    let mut tick = tokio::time::interval_at(tokio::time::Instant::now() + SAMPLE_INTERVAL, SAMPLE_INTERVAL);
    loop {
        tokio::select! {
            _ = tick.tick() => points.extend(sampler.sample()),
            _ = stop.changed() => return points,
        }
    }
}

pub async fn idle(admin: &AdminClient, duration: u64, out: &Path) -> CmdResult {
    create_out_dir(out)?;
    let state = cluster_state(admin).await?;
    let (stop_tx, stop_rx) = watch::channel(false);
    let sampler = tokio::spawn(sample_until(sample_targets(&state), stop_rx));
    let interrupted = tokio::select! {
        _ = tokio::time::sleep(Duration::from_secs(duration) + SAMPLE_INTERVAL / 2) => false,
        _ = tokio::signal::ctrl_c() => true,
    };
    let _ = stop_tx.send(true);
    let points = sampler.await.map_err(|e| runtime(e.to_string()))?;
    write_samples(&out.join(SAMPLES_CSV), &points).map_err(harness_failure)?;
    let header = vec![HostInfo::detect().header(), format!("idle for {duration}s"), cpu_note()];
    write_report(out, "idle", &header, &resource_rows("idle", &points))?;
    if interrupted {
        return Err(runtime("interrupted; partial samples written"));
    }
    Ok(())
}

pub async fn load(admin: &AdminClient, base: &LoadProfile, services: &[String], user: &str, out: &Path) -> CmdResult {
    create_out_dir(out)?;
    let state = cluster_state(admin).await?;
    let services: Vec<String> = if services.is_empty() {
        DEFAULT_LOAD_SERVICES.iter().map(|s| s.to_string()).collect()
    } else {
        services.to_vec()
    };
    let mut plans = Vec::new();
    for svc in &services {
        let mut profile = base.clone();
        profile.target_url = format!("{}{}", service_url(&state, svc)?, default_endpoint(svc));
        plans.push((svc.clone(), profile));
    }
    if services.iter().any(|s| s == "orders") {
        let (name, password) = credentials(user)?;
        let users = service_url(&state, "users")?;
        let token = Api::new()
            .login(&users, &name, &password)
            .await
            .map_err(|e| runtime(format!("login as {name} for orders load: {}; run `bench seed`", e.message)))?;
        for (svc, profile) in &mut plans {
            if svc == "orders" {
                profile.headers.push(("authorization".into(), format!("Bearer {token}")));
            }
        }
    }

    let (stop_tx, stop_rx) = watch::channel(false);
    let sampler = tokio::spawn(sample_until(sample_targets(&state), stop_rx));
    let mut rows = Vec::new();
    let mut header = vec![
        HostInfo::detect().header(),
        format!(
            "profile: {} requests / {}ms ramp-up / {} iterations per service",
            base.requests_per_iteration, base.ramp_up_ms, base.iterations
        ),
        cpu_note(),
    ];
    let mut failure = None;
    for (svc, profile) in &plans {
        header.push(format!("endpoint {svc}: GET {}", profile.target_url));
        let started = Instant::now();
        let result = tokio::select! {
            r = generate_load(profile) => r,
            _ = tokio::signal::ctrl_c() => {
                failure = Some(runtime(format!("interrupted during {svc}; partial artifacts written")));
                break;
            }
        };
        let records = match result {
            Ok(r) => r,
            Err(e) => {
                failure = Some(harness_failure(e));
                break;
            }
        };
        let path = records_path(out, Some(svc));
        bookstore_harness::artifacts::write_records(&path, &records).map_err(harness_failure)?;
        let scenario = format!("load/{svc}");
        rows.extend(latency_rows(&scenario, &summarize(&records)));
        rows.push(ReportRow::new(&scenario, "elapsed_s", started.elapsed().as_secs_f64()));
    }
    let _ = stop_tx.send(true);
    let points = sampler.await.map_err(|e| runtime(e.to_string()))?;
    write_samples(&out.join(SAMPLES_CSV), &points).map_err(harness_failure)?;
    rows.extend(resource_rows("load", &points));
    write_report(out, "load", &header, &rows)?;
    failure.map_or(Ok(()), Err)
}

async fn wait_all_ready(admin: &AdminClient, deployment: &str) -> Result<ClusterState, Failure> {
    let (ok, state) = admin
        .wait_for(Duration::from_secs(60), |s| {
            s.deployment(deployment).is_some_and(|d| {
                d.ready() == d.desired as usize
                    && d.replicas.iter().filter(|r| r.phase != Phase::Terminated).count() == d.desired as usize
            })
        })
        .await
        .map_err(|e| runtime(format!("conductor: {}", e.message)))?;
    if !ok {
        return Err(runtime(format!("{deployment} did not become fully Ready within 60s")));
    }
    Ok(state)
}

pub async fn boot_time(admin: &AdminClient, service: &str, trials: u32, poll_ms: u64, out: &Path) -> CmdResult {
    create_out_dir(out)?;
    let state = cluster_state(admin).await?;
    if state.deployment(service).is_none() {
        return Err(usage(format!("no deployment named {service:?}")));
    }
    let mut results = Vec::new();
    for _ in 0..trials.max(1) {
        let state = wait_all_ready(admin, service).await?;
        let replica = state
            .deployment(service)
            .and_then(|d| d.replicas.iter().find(|r| r.phase == Phase::Ready))
            .ok_or_else(|| runtime(format!("{service} has no Ready replica")))?;
        let mut hooks = LifecycleHooks::new(
            service,
            KillHook::Conductor {
                admin: admin.clone(),
                deployment: service.to_string(),
                index: replica.index,
            },
            // Replica-direct: with several replicas the service port never goes down.
            format!("http://127.0.0.1:{}/health", replica.port),
        );
        hooks.poll_interval = Duration::from_millis(poll_ms.max(1));
        let r = measure_boot_time(&hooks).await.map_err(harness_failure)?;
        match r.boot_ms {
            Some(ms) => println!("{service}/{}: boot {ms:.1} ms", replica.index),
            None => println!("{service}/{}: timed out", replica.index),
        }
        results.push(r);
    }
    // Leave the deployment routable again before returning.
    wait_all_ready(admin, service).await?;
    append_csv(&out.join("boot.csv"), &results).map_err(harness_failure)?;
    let scenario = format!("boot/{service}");
    let times: Vec<f64> = results.iter().filter_map(|r| r.boot_ms).collect();
    let mut rows = vec![ReportRow::new(&scenario, "trials", results.len() as f64)];
    rows.push(ReportRow::new(&scenario, "timeouts", (results.len() - times.len()) as f64));
    if !times.is_empty() {
        rows.push(ReportRow::new(&scenario, "boot_ms_mean", times.iter().sum::<f64>() / times.len() as f64));
        rows.push(ReportRow::new(&scenario, "boot_ms_max", times.iter().copied().fold(0.0, f64::max)));
    }
    let header = vec![
        HostInfo::detect().header(),
        format!("kill via conductor, readiness polled every {poll_ms}ms on the replica port"),
    ];
    write_report(out, &scenario, &header, &rows)
}

fn resolve_exec(exec: &str, workdir: &Path) -> Option<PathBuf> {
    let program = exec.split_whitespace().next()?;
    if program.contains('/') {
        let p = workdir.join(program);
        return p.exists().then_some(p);
    }
    let own_dir = std::env::current_exe().ok()?.parent()?.to_path_buf();
    let path_var = std::env::var_os("PATH").unwrap_or_default();
    std::iter::once(own_dir)
        .chain(std::env::split_paths(&path_var))
        .map(|d| d.join(program))
        .find(|p| p.is_file())
}

/// Executable, volume, and any existing path named by a plain env value.
fn footprint_paths(state: &ClusterState, deployment: &bookstore_conductor::DeploymentState) -> Vec<PathBuf> {
    let workdir = Path::new(&state.workdir);
    let mut paths: Vec<PathBuf> = resolve_exec(&deployment.exec, workdir).into_iter().collect();
    paths.extend(deployment.volume_path.iter().map(PathBuf::from));
    for (_, value) in &deployment.env {
        if value.is_empty() || value.contains("${") || value.contains("://") {
            continue;
        }
        let p = workdir.join(value);
        if p.exists() {
            paths.push(p);
        }
    }
    paths
}

pub async fn footprint(admin: &AdminClient, out: &Path) -> CmdResult {
    create_out_dir(out)?;
    let state = cluster_state(admin).await?;
    let mut rows = Vec::new();
    let mut files = Vec::new();
    for d in &state.deployments {
        let report = measure_footprint(&d.name, &footprint_paths(&state, d)).map_err(harness_failure)?;
        rows.push(ReportRow::new(format!("footprint/{}", d.name), "bytes_on_disk", report.bytes_on_disk as f64));
        rows.push(ReportRow::new(format!("footprint/{}", d.name), "files", report.files.len() as f64));
        files.extend(report.files.into_iter().map(|(path, bytes)| FileRow {
            target: d.name.clone(),
            path: path.display().to_string(),
            bytes,
        }));
    }
    bookstore_harness::artifacts::write_csv(&out.join("footprint.csv"), &files).map_err(harness_failure)?;
    write_report(out, "footprint", &[HostInfo::detect().header()], &rows)
}

#[derive(serde::Serialize)]
struct FileRow {
    target: String,
    path: String,
    bytes: u64,
}
