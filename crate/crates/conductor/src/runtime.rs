//! The control loop.
//!
//! One task owns all desired and observed state. Admin requests and probe
//! results reach it over a single queue; a 50ms tick detects exited
//! processes, enforces the startup budget and applies the reconcile plan.
//! After every step the Ready sets read by the service proxies are
//! republished.

use std::collections::{BTreeMap, HashMap};
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::process::Stdio;
use std::sync::Arc;
use std::time::{Duration, Instant};

use bookstore_core::manifest::volume_env_key;
use bookstore_core::orchestrate::{
    reconcile_once, restart_backoff, AutoscaleWindow, ObservedReplica, ProbeTracker, BACKOFF_RESET_AFTER,
    PROBE_INTERVAL, PROBE_TIMEOUT, STARTUP_BUDGET,
};
use bookstore_core::{now_ms, procfs, Action, ApiError, DeploymentSpec, Manifest, Phase};
use tokio::process::{Child, Command};
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinHandle;

use crate::env::{expand, replica_port, search_path};
use crate::proxy::{self, Backend, ReadySets, Route};
use crate::state::{ApplySummary, ClusterState, DeploymentState, ReplicaState, ServiceState, VolumeState};
use crate::{Config, MAX_REPLICAS};

const TICK: Duration = Duration::from_millis(50);
const SAMPLE_EVERY: Duration = Duration::from_secs(1);
const STOP_GRACE: Duration = Duration::from_secs(2);

pub(crate) enum Msg {
    Apply(Manifest, oneshot::Sender<Result<ApplySummary, ApiError>>),
    Scale(String, u32, oneshot::Sender<Result<(), ApiError>>),
    Kill(String, u32, oneshot::Sender<Result<u64, ApiError>>),
    State(oneshot::Sender<ClusterState>),
    Shutdown(oneshot::Sender<()>),
    Probe {
        deployment: String,
        index: u32,
        generation: u64,
        healthy: bool,
    },
}

struct Replica {
    tracker: ProbeTracker,
    child: Option<Child>,
    pid: Option<u32>,
    port: u16,
    generation: u64,
    restarts: u32,
    started_at: Option<u64>,
    ready_at: Option<u64>,
    /// Consecutive crashes, drives the restart backoff.
    streak: u32,
    retry_at: u64,
    last_error: Option<String>,
    probe: Option<JoinHandle<()>>,
}

impl Replica {
    fn phase(&self) -> Phase {
        self.tracker.phase()
    }
}

struct Deployment {
    spec: DeploymentSpec,
    ordinal: usize,
    desired: u32,
    replicas: BTreeMap<u32, Replica>,
    window: AutoscaleWindow,
    cpu_seen: HashMap<u32, (Duration, Instant)>,
}

struct ServiceListener {
    spec: bookstore_core::ServiceSpec,
    task: JoinHandle<()>,
}

pub(crate) struct Runtime {
    config: Config,
    ready: Arc<ReadySets>,
    tx: mpsc::Sender<Msg>,
    deployments: BTreeMap<String, Deployment>,
    services: BTreeMap<String, ServiceListener>,
    volumes: BTreeMap<String, PathBuf>,
    next_generation: u64,
    path_var: String,
}

/// Sends SIGTERM, then SIGKILL if the process outlives `grace`.
async fn terminate(mut child: Child, grace: Duration) {
    if let Some(pid) = child.id() {
        // SAFETY: signalling a pid we spawned and have not yet reaped.
        unsafe {
            libc::kill(pid as libc::pid_t, libc::SIGTERM);
        }
    }
    if tokio::time::timeout(grace, child.wait()).await.is_err() {
        let _ = child.kill().await;
    }
}

fn probe_loop(tx: mpsc::Sender<Msg>, deployment: String, index: u32, port: u16, generation: u64) -> JoinHandle<()> {
    tokio::spawn(async move {
        let http = reqwest::Client::builder()
            .timeout(PROBE_TIMEOUT)
            .build()
            .expect("http client builds");
        let url = format!("http://127.0.0.1:{port}/health");
        let mut ticker = tokio::time::interval(PROBE_INTERVAL);
        loop {
            ticker.tick().await;
            let healthy = matches!(http.get(&url).send().await, Ok(r) if r.status().is_success());
            let msg = Msg::Probe {
                deployment: deployment.clone(),
                index,
                generation,
                healthy,
            };
            if tx.send(msg).await.is_err() {
                return;
            }
        }
    })
}

fn port_free(port: u16) -> bool {
    std::net::TcpListener::bind(("127.0.0.1", port)).is_ok()
}

impl Runtime {
    pub(crate) fn new(config: Config, ready: Arc<ReadySets>, tx: mpsc::Sender<Msg>) -> Self {
        let path_var = search_path(&config.bin_dirs);
        Self {
            config,
            ready,
            tx,
            deployments: BTreeMap::new(),
            services: BTreeMap::new(),
            volumes: BTreeMap::new(),
            next_generation: 1,
            path_var,
        }
    }

    pub(crate) async fn run(mut self, mut rx: mpsc::Receiver<Msg>) {
        let mut tick = tokio::time::interval(TICK);
        tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        let mut sample = tokio::time::interval(SAMPLE_EVERY);
        sample.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            tokio::select! {
                msg = rx.recv() => {
                    let Some(msg) = msg else { break };
                    if let Msg::Shutdown(reply) = msg {
                        self.shutdown().await;
                        let _ = reply.send(());
                        break;
                    }
                    self.handle(msg).await;
                }
                _ = tick.tick() => {
                    self.reap();
                    self.enforce_startup_budget();
                    self.reconcile();
                }
                _ = sample.tick() => self.autoscale(),
            }
            self.publish();
        }
    }

    async fn handle(&mut self, msg: Msg) {
        match msg {
            Msg::Apply(manifest, reply) => {
                let result = self.apply(manifest).await;
                if result.is_ok() {
                    self.reconcile();
                }
                let _ = reply.send(result);
            }
            Msg::Scale(name, n, reply) => {
                let result = self.scale(&name, n);
                if result.is_ok() {
                    self.reconcile();
                }
                let _ = reply.send(result);
            }
            Msg::Kill(name, index, reply) => {
                let _ = reply.send(self.kill(&name, index).await);
            }
            Msg::State(reply) => {
                let _ = reply.send(self.snapshot());
            }
            Msg::Probe {
                deployment,
                index,
                generation,
                healthy,
            } => self.on_probe(&deployment, index, generation, healthy),
            Msg::Shutdown(_) => unreachable!("handled by the loop"),
        }
    }

    fn provision(&mut self, claim: &str) -> Result<PathBuf, ApiError> {
        let path = self.config.data_root.join(claim);
        std::fs::create_dir_all(&path)
            .map_err(|e| ApiError::internal(format!("cannot provision volume {claim} at {}: {e}", path.display())))?;
        let path = path.canonicalize().unwrap_or(path);
        self.volumes.insert(claim.to_string(), path.clone());
        Ok(path)
    }

    async fn apply(&mut self, manifest: Manifest) -> Result<ApplySummary, ApiError> {
        if manifest.deployments.len() > u16::MAX as usize / MAX_REPLICAS as usize {
            return Err(ApiError::bad_request("too many deployments"));
        }
        for (ordinal, d) in manifest.deployments.iter().enumerate() {
            if d.max_replicas.max(d.replicas) > MAX_REPLICAS {
                return Err(ApiError::bad_request(format!(
                    "deployment {}: at most {MAX_REPLICAS} replicas are supported",
                    d.name
                )));
            }
            if replica_port(self.config.replica_port_base, ordinal, MAX_REPLICAS - 1).is_none() {
                return Err(ApiError::bad_request(format!(
                    "deployment {}: replica ports exceed 65535",
                    d.name
                )));
            }
        }
        for claim in &manifest.volumes {
            self.provision(&claim.name)?;
        }

        // Bind ports we do not already hold first, so a conflict leaves the
        // running cluster untouched.
        let held: Vec<u16> = self.services.values().map(|s| s.spec.listen_port).collect();
        let mut fresh = HashMap::new();
        for svc in &manifest.services {
            if held.contains(&svc.listen_port) {
                continue;
            }
            let listener = tokio::net::TcpListener::bind(("127.0.0.1", svc.listen_port))
                .await
                .map_err(|e| {
                    ApiError::conflict(format!(
                        "service {}: cannot listen on port {}: {e}",
                        svc.name, svc.listen_port
                    ))
                })?;
            fresh.insert(svc.listen_port, listener);
        }
        let outdated: Vec<String> = self
            .services
            .iter()
            .filter(|(name, cur)| manifest.service(name) != Some(&cur.spec) || cur.task.is_finished())
            .map(|(name, _)| name.clone())
            .collect();
        for name in outdated {
            if let Some(old) = self.services.remove(&name) {
                old.task.abort();
                let _ = old.task.await;
            }
        }
        for svc in &manifest.services {
            if self.services.contains_key(&svc.name) {
                continue;
            }
            let listener = match fresh.remove(&svc.listen_port) {
                Some(l) => l,
                None => tokio::net::TcpListener::bind(("127.0.0.1", svc.listen_port))
                    .await
                    .map_err(|e| ApiError::conflict(format!("service {}: {e}", svc.name)))?,
            };
            let app = proxy::router(Arc::new(Route::new(&svc.target, Arc::clone(&self.ready))));
            let task = tokio::spawn(async move {
                let _ = axum::serve(listener, app).await;
            });
            self.services.insert(
                svc.name.clone(),
                ServiceListener {
                    spec: svc.clone(),
                    task,
                },
            );
        }

        let names: Vec<String> = manifest.deployments.iter().map(|d| d.name.clone()).collect();
        for (name, dep) in self.deployments.iter_mut() {
            if !names.contains(name) {
                dep.desired = 0;
            }
        }
        for (ordinal, spec) in manifest.deployments.iter().enumerate() {
            match self.deployments.get_mut(&spec.name) {
                Some(dep) => {
                    dep.desired = spec.replicas;
                    dep.ordinal = ordinal;
                    dep.spec = spec.clone();
                }
                None => {
                    self.deployments.insert(
                        spec.name.clone(),
                        Deployment {
                            spec: spec.clone(),
                            ordinal,
                            desired: spec.replicas,
                            replicas: BTreeMap::new(),
                            window: AutoscaleWindow::new(),
                            cpu_seen: HashMap::new(),
                        },
                    );
                }
            }
        }
        Ok(ApplySummary {
            deployments: manifest.deployments.len(),
            services: manifest.services.len(),
            volumes: manifest.volumes.len(),
        })
    }

    fn scale(&mut self, name: &str, n: u32) -> Result<(), ApiError> {
        let dep = self
            .deployments
            .get_mut(name)
            .filter(|d| d.desired > 0 || d.spec.replicas > 0)
            .ok_or_else(|| ApiError::not_found(format!("no deployment {name:?}")))?;
        if n < 1 {
            return Err(ApiError::bad_request("replicas must be at least 1"));
        }
        if n > MAX_REPLICAS {
            return Err(ApiError::bad_request(format!("replicas must be at most {MAX_REPLICAS}")));
        }
        if dep.spec.autoscaled() && !(dep.spec.min_replicas..=dep.spec.max_replicas).contains(&n) {
            return Err(ApiError::bad_request(format!(
                "replicas must be within {}..={} for autoscaled {name}",
                dep.spec.min_replicas, dep.spec.max_replicas
            )));
        }
        dep.desired = n;
        dep.window.note_change(now_ms());
        Ok(())
    }

    /// Hard-kills a serving replica and starts its replacement at once.
    async fn kill(&mut self, name: &str, index: u32) -> Result<u64, ApiError> {
        let missing = || ApiError::not_found(format!("no live replica {name}/{index}"));
        let dep = self.deployments.get_mut(name).ok_or_else(missing)?;
        let replica = dep.replicas.get_mut(&index).ok_or_else(missing)?;
        if !matches!(replica.phase(), Phase::Ready | Phase::Unhealthy) {
            return Err(missing());
        }
        if let Some(p) = replica.probe.take() {
            p.abort();
        }
        let killed_at = now_ms();
        if let Some(mut child) = replica.child.take() {
            let _ = child.start_kill();
            let _ = child.wait().await;
        }
        replica.tracker.set(Phase::Terminated);
        replica.pid = None;
        self.publish();
        self.start(name, index);
        Ok(killed_at)
    }

    fn on_probe(&mut self, name: &str, index: u32, generation: u64, healthy: bool) {
        let Some(replica) = self
            .deployments
            .get_mut(name)
            .and_then(|d| d.replicas.get_mut(&index))
            .filter(|r| r.generation == generation)
        else {
            return;
        };
        let Some(t) = replica.tracker.observe(healthy) else {
            return;
        };
        tracing::info!(deployment = name, index, from = ?t.from, to = ?t.to, "replica phase");
        match t.to {
            Phase::Ready if t.from == Phase::Starting => replica.ready_at = Some(now_ms()),
            Phase::Failed => {
                replica.last_error = Some("health checks failed".into());
                Self::mark_failed(replica);
            }
            _ => {}
        }
    }

    fn mark_failed(replica: &mut Replica) {
        let now = now_ms();
        if let Some(p) = replica.probe.take() {
            p.abort();
        }
        if let Some(mut child) = replica.child.take() {
            let _ = child.start_kill();
            tokio::spawn(async move {
                let _ = child.wait().await;
            });
        }
        let healthy_long = replica
            .ready_at
            .is_some_and(|r| now.saturating_sub(r) >= BACKOFF_RESET_AFTER.as_millis() as u64);
        if healthy_long {
            replica.streak = 0;
        }
        replica.retry_at = now + restart_backoff(replica.streak).as_millis() as u64;
        replica.streak = replica.streak.saturating_add(1);
        replica.pid = None;
        replica.tracker.set(Phase::Failed);
    }

    /// Marks replicas whose process exited on its own as Failed.
    fn reap(&mut self) {
        for (name, dep) in self.deployments.iter_mut() {
            for (index, replica) in dep.replicas.iter_mut() {
                let exited = match replica.child.as_mut().map(|c| c.try_wait()) {
                    Some(Ok(Some(status))) => Some(status.to_string()),
                    Some(Err(e)) => Some(e.to_string()),
                    _ => None,
                };
                if let Some(status) = exited {
                    replica.child = None;
                    if replica.phase() != Phase::Terminated {
                        tracing::warn!(deployment = %name, index, %status, "replica exited");
                        replica.last_error = Some(format!("process exited: {status}"));
                        Self::mark_failed(replica);
                    }
                }
            }
        }
    }

    fn enforce_startup_budget(&mut self) {
        let now = now_ms();
        for dep in self.deployments.values_mut() {
            for replica in dep.replicas.values_mut() {
                let late = replica.phase() == Phase::Starting
                    && replica
                        .started_at
                        .is_some_and(|s| now.saturating_sub(s) > STARTUP_BUDGET.as_millis() as u64);
                if late {
                    replica.last_error = Some("not ready within the startup budget".into());
                    Self::mark_failed(replica);
                }
            }
        }
    }

    fn reconcile(&mut self) {
        let now = now_ms();
        let desired: BTreeMap<String, u32> = self.deployments.iter().map(|(n, d)| (n.clone(), d.desired)).collect();
        let observed: BTreeMap<String, Vec<ObservedReplica>> = self
            .deployments
            .iter()
            .map(|(n, d)| {
                let obs = d
                    .replicas
                    .iter()
                    .map(|(&index, r)| ObservedReplica {
                        index,
                        phase: r.phase(),
                        restart_eligible: now >= r.retry_at,
                    })
                    .collect();
                (n.clone(), obs)
            })
            .collect();
        for action in reconcile_once(&desired, &observed) {
            match action {
                Action::Stop { deployment, index } => self.stop(&deployment, index),
                Action::Start { deployment, index } => self.start(&deployment, index),
            }
        }
        let gone: Vec<String> = self
            .deployments
            .iter()
            .filter(|(_, d)| d.desired == 0 && d.replicas.values().all(|r| r.phase() == Phase::Terminated))
            .map(|(n, _)| n.clone())
            .collect();
        for name in gone {
            self.deployments.remove(&name);
            self.ready.remove(&name);
        }
    }

    fn stop(&mut self, name: &str, index: u32) {
        let Some(dep) = self.deployments.get_mut(name) else {
            return;
        };
        let Some(replica) = dep.replicas.get_mut(&index) else {
            return;
        };
        if let Some(p) = replica.probe.take() {
            p.abort();
        }
        if let Some(child) = replica.child.take() {
            tokio::spawn(terminate(child, STOP_GRACE));
        }
        replica.pid = None;
        replica.tracker.set(Phase::Terminated);
        if index >= dep.desired {
            dep.replicas.remove(&index);
        }
    }

    fn start(&mut self, name: &str, index: u32) {
        let generation = self.next_generation;
        self.next_generation += 1;
        let Some(dep) = self.deployments.get_mut(name) else {
            return;
        };
        let port = replica_port(self.config.replica_port_base, dep.ordinal, index).unwrap_or(0);
        let previous = dep.replicas.remove(&index);
        let (restarts, streak, ready_at) = match &previous {
            Some(p) => (p.restarts + 1, p.streak, p.ready_at),
            None => (0, 0, None),
        };
        let mut replica = Replica {
            tracker: ProbeTracker::new(Phase::Pending),
            child: None,
            pid: None,
            port,
            generation,
            restarts,
            started_at: None,
            ready_at,
            streak,
            retry_at: 0,
            last_error: None,
            probe: None,
        };
        match spawn_replica(
            &dep.spec,
            index,
            port,
            &self.volumes,
            &self.config.data_root,
            &self.path_var,
        ) {
            Ok(child) => {
                replica.pid = child.id();
                replica.child = Some(child);
                replica.started_at = Some(now_ms());
                replica.tracker.set(Phase::Starting);
                replica.probe = Some(probe_loop(self.tx.clone(), name.to_string(), index, port, generation));
            }
            Err(e) => {
                tracing::error!(deployment = name, index, error = %e, "cannot start replica");
                replica.last_error = Some(e);
                Self::mark_failed(&mut replica);
            }
        }
        dep.replicas.insert(index, replica);
    }

    /// Feeds per-deployment mean CPU into the autoscaler window and applies
    /// any resulting change.
    fn autoscale(&mut self) {
        let now = now_ms();
        let mut changed = false;
        for (name, dep) in self.deployments.iter_mut() {
            let Some(target) = dep.spec.cpu_target_percent else {
                continue;
            };
            let mut readings = Vec::new();
            let mut seen = HashMap::new();
            for replica in dep.replicas.values().filter(|r| r.phase() == Phase::Ready) {
                let Some(pid) = replica.pid else { continue };
                let Ok(stat) = procfs::read(pid) else { continue };
                let at = Instant::now();
                if let Some((cpu, when)) = dep.cpu_seen.get(&pid) {
                    let wall = at.duration_since(*when).as_secs_f64();
                    if wall > 0.0 {
                        let used = stat.cpu_time.saturating_sub(*cpu).as_secs_f64();
                        readings.push(used / wall * 100.0);
                    }
                }
                seen.insert(pid, (stat.cpu_time, at));
            }
            dep.cpu_seen = seen;
            if !readings.is_empty() {
                dep.window.record(now, readings.iter().sum::<f64>() / readings.len() as f64);
            }
            if let Some(n) = dep
                .window
                .tick(now, dep.desired, target, dep.spec.min_replicas, dep.spec.max_replicas)
            {
                tracing::info!(deployment = %name, from = dep.desired, to = n, "autoscale");
                dep.desired = n;
                changed = true;
            }
        }
        if changed {
            self.reconcile();
        }
    }

    fn publish(&self) {
        for (name, dep) in &self.deployments {
            let backends = dep
                .replicas
                .iter()
                .filter(|(_, r)| r.phase() == Phase::Ready)
                .map(|(&index, r)| Backend { index, port: r.port })
                .collect();
            self.ready.publish(name, backends);
        }
    }

    fn snapshot(&self) -> ClusterState {
        let deployments = self
            .deployments
            .iter()
            .map(|(name, dep)| DeploymentState {
                name: name.clone(),
                desired: dep.desired,
                exec: dep.spec.exec.clone(),
                env: dep.spec.env.clone(),
                cpu_target_percent: dep.spec.cpu_target_percent,
                min_replicas: dep.spec.min_replicas,
                max_replicas: dep.spec.max_replicas,
                volume_path: dep
                    .spec
                    .volume
                    .as_ref()
                    .and_then(|v| self.volumes.get(v))
                    .map(|p| p.display().to_string()),
                replicas: dep
                    .replicas
                    .iter()
                    .map(|(&index, r)| ReplicaState {
                        deployment: name.clone(),
                        index,
                        phase: r.phase(),
                        pid: r.pid,
                        port: r.port,
                        restarts: r.restarts,
                        started_at: r.started_at,
                        ready_at: r.ready_at,
                        last_error: r.last_error.clone(),
                    })
                    .collect(),
            })
            .collect();
        ClusterState {
            taken_at: now_ms(),
            workdir: std::env::current_dir()
                .map(|d| d.display().to_string())
                .unwrap_or_default(),
            deployments,
            services: self
                .services
                .values()
                .map(|s| ServiceState {
                    name: s.spec.name.clone(),
                    listen_port: s.spec.listen_port,
                    target: s.spec.target.clone(),
                })
                .collect(),
            volumes: self
                .volumes
                .iter()
                .map(|(n, p)| VolumeState {
                    name: n.clone(),
                    path: p.display().to_string(),
                })
                .collect(),
        }
    }

    async fn shutdown(&mut self) {
        for svc in std::mem::take(&mut self.services).into_values() {
            svc.task.abort();
        }
        let mut pending = Vec::new();
        for dep in self.deployments.values_mut() {
            for replica in dep.replicas.values_mut() {
                if let Some(p) = replica.probe.take() {
                    p.abort();
                }
                if let Some(child) = replica.child.take() {
                    pending.push(terminate(child, STOP_GRACE));
                }
                replica.tracker.set(Phase::Terminated);
            }
        }
        for p in pending {
            p.await;
        }
        self.deployments.clear();
    }
}

fn spawn_replica(
    spec: &DeploymentSpec,
    index: u32,
    port: u16,
    volumes: &BTreeMap<String, PathBuf>,
    data_root: &Path,
    path_var: &str,
) -> Result<Child, String> {
    if port == 0 || !port_free(port) {
        return Err(format!("port {port} for {}/{index} is in use", spec.name));
    }
    let mut vars = BTreeMap::new();
    vars.insert("PORT".to_string(), port.to_string());
    vars.insert("REPLICA_ID".to_string(), index.to_string());
    vars.insert("DEPLOYMENT".to_string(), spec.name.clone());
    if let Some(claim) = &spec.volume {
        let path = volumes
            .get(claim)
            .ok_or_else(|| format!("volume {claim} is not provisioned"))?;
        vars.insert(volume_env_key(claim), path.display().to_string());
    }
    let logs = data_root.join(".logs");
    std::fs::create_dir_all(&logs).map_err(|e| format!("log dir {}: {e}", logs.display()))?;
    let log_path = logs.join(format!("{}-{index}.log", spec.name));
    let log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| format!("log file {}: {e}", log_path.display()))?;
    let err_log = log.try_clone().map_err(|e| e.to_string())?;

    let mut cmd = Command::new("sh");
    cmd.arg("-c")
        .arg(format!("exec {}", spec.exec))
        .env("PATH", path_var)
        .stdin(Stdio::null())
        .stdout(Stdio::from(log))
        .stderr(Stdio::from(err_log))
        .kill_on_drop(true);
    for (k, v) in &vars {
        cmd.env(k, v);
    }
    for (k, v) in &spec.env {
        cmd.env(k, expand(v, &vars));
    }
    cmd.spawn().map_err(|e| format!("spawn {:?}: {e}", spec.exec))
}
