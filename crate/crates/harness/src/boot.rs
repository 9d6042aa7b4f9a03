//! Kill-to-ready timing.
//!
//! The kill is pluggable: a conductor replica, or any shell command for
//! targets the conductor does not manage. Readiness is the first 200 from
//! `readiness_url` after the kill. With more than one replica behind a
//! service the service URL never goes down, so point `readiness_url` at the
//! killed replica's own port.

use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use bookstore_conductor::AdminClient;
use reqwest::Client;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

pub const DEFAULT_POLL_INTERVAL: Duration = Duration::from_millis(10);
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
const PROBE_TIMEOUT: Duration = Duration::from_millis(500);

#[derive(Clone)]
pub enum KillHook {
    Conductor {
        admin: AdminClient,
        deployment: String,
        index: u32,
    },
    /// Run through `sh -c`; a non-zero exit is a kill failure.
    Command(String),
}

#[derive(Clone)]
pub struct LifecycleHooks {
    pub target: String,
    pub kill: KillHook,
    pub readiness_url: String,
    pub poll_interval: Duration,
    pub timeout: Duration,
}

impl LifecycleHooks {
    pub fn new(target: impl Into<String>, kill: KillHook, readiness_url: impl Into<String>) -> Self {
        Self {
            target: target.into(),
            kill,
            readiness_url: readiness_url.into(),
            poll_interval: DEFAULT_POLL_INTERVAL,
            timeout: DEFAULT_TIMEOUT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootTimeResult {
    pub target: String,
    pub killed_at_ms: f64,
    pub ready_at_ms: Option<f64>,
    pub boot_ms: Option<f64>,
    pub timed_out: bool,
}

fn wall_ms() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or_default()
        .as_secs_f64()
        * 1000.0
}

async fn probe(client: &Client, url: &str) -> Result<(), String> {
    match client.get(url).send().await {
        Ok(r) if r.status().as_u16() == 200 => Ok(()),
        Ok(r) => Err(format!("status {}", r.status().as_u16())),
        Err(e) => Err(e.to_string()),
    }
}

async fn kill(hook: &KillHook) -> Result<f64, HarnessError> {
    match hook {
        KillHook::Conductor { admin, deployment, index } => admin
            .kill(deployment, *index)
            .await
            .map(|ms| ms as f64)
            .map_err(|e| HarnessError::Kill(e.to_string())),
        KillHook::Command(cmd) => {
            let killed_at = wall_ms();
            let status = tokio::process::Command::new("sh")
                .arg("-c")
                .arg(cmd)
                .status()
                .await
                .map_err(|e| HarnessError::Kill(format!("{cmd}: {e}")))?;
            if !status.success() {
                return Err(HarnessError::Kill(format!("{cmd}: {status}")));
            }
            Ok(killed_at)
        }
    }
}

pub async fn measure_boot_time(hooks: &LifecycleHooks) -> Result<BootTimeResult, HarnessError> {
    // No pooling: a kept-alive connection to the dead process must not be
    // mistaken for the replacement.
    let client = Client::builder()
        .pool_max_idle_per_host(0)
        .timeout(PROBE_TIMEOUT)
        .build()
        .map_err(|e| HarnessError::Kill(e.to_string()))?;
    probe(&client, &hooks.readiness_url)
        .await
        .map_err(|reason| HarnessError::NotReady {
            url: hooks.readiness_url.clone(),
            reason,
        })?;

    let killed_at_ms = kill(&hooks.kill).await?;
    let deadline = Instant::now() + hooks.timeout;
    let interval = hooks.poll_interval.max(Duration::from_millis(1));
    let mut next = tokio::time::Instant::now();
    loop {
        if probe(&client, &hooks.readiness_url).await.is_ok() {
            let ready_at = wall_ms();
            return Ok(BootTimeResult {
                target: hooks.target.clone(),
                killed_at_ms,
                ready_at_ms: Some(ready_at),
                boot_ms: Some((ready_at - killed_at_ms).max(0.0)),
                timed_out: false,
            });
        }
        if Instant::now() >= deadline {
            return Ok(BootTimeResult {
                target: hooks.target.clone(),
                killed_at_ms,
                ready_at_ms: None,
                boot_ms: None,
                timed_out: true,
            });
        }
        next += interval;
        tokio::time::sleep_until(next.max(tokio::time::Instant::now())).await;
    }
}
