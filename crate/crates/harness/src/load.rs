//! Open-loop load generation.
//!
//! Request `k` of iteration `i` is scheduled at
//! `start + i*ramp_up + k*(ramp_up / requests_per_iteration)` and dispatched
//! at that instant whether or not earlier requests have finished. Every
//! scheduled request yields exactly one [`RequestRecord`]; transport
//! failures become records too.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use reqwest::{Client, Method};
use serde::{Deserialize, Serialize};
use tokio::task::JoinSet;

use crate::HarnessError;

pub const DEFAULT_TIMEOUT_MS: u64 = 5000;
const PREFLIGHT_BUDGET: Duration = Duration::from_secs(10);
const PREFLIGHT_RETRY: Duration = Duration::from_millis(200);

#[derive(Debug, Clone, PartialEq)]
pub struct LoadProfile {
    pub requests_per_iteration: u32,
    pub ramp_up_ms: u64,
    pub iterations: u32,
    pub target_url: String,
    pub method: Method,
    pub body: Option<String>,
    pub headers: Vec<(String, String)>,
    pub timeout_ms: u64,
}

impl LoadProfile {
    /// GET `target_url` with 1000 requests per 1000ms ramp, 10 iterations.
    pub fn standard(target_url: impl Into<String>) -> Self {
        Self::get(target_url, 1000, 1000, 10)
    }

    pub fn get(target_url: impl Into<String>, requests_per_iteration: u32, ramp_up_ms: u64, iterations: u32) -> Self {
        Self {
            requests_per_iteration,
            ramp_up_ms,
            iterations,
            target_url: target_url.into(),
            method: Method::GET,
            body: None,
            headers: Vec::new(),
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }

    pub fn total(&self) -> u64 {
        self.requests_per_iteration as u64 * self.iterations as u64
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if self.requests_per_iteration == 0 || self.iterations == 0 || self.ramp_up_ms == 0 {
            return Err(HarnessError::Profile(
                "requests per iteration, ramp-up and iterations must all be positive".into(),
            ));
        }
        Ok(())
    }

    /// Offsets from the run start, in ms, in dispatch order.
    pub fn schedule(&self) -> Vec<f64> {
        let spacing = self.ramp_up_ms as f64 / self.requests_per_iteration as f64;
        (0..self.iterations)
            .flat_map(|i| {
                (0..self.requests_per_iteration)
                    .map(move |k| i as f64 * self.ramp_up_ms as f64 + k as f64 * spacing)
            })
            .collect()
    }
}

/// `R,M,I`: requests per iteration, ramp-up ms, iterations.
impl FromStr for LoadProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [r, m, i] = parts.as_slice() else {
            return Err(format!("profile must be R,M,I, got {s:?}"));
        };
        let num = |v: &str, what: &str| -> Result<u64, String> {
            match v.parse::<u64>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(format!("{what} must be a positive integer, got {v:?}")),
            }
        };
        let r = u32::try_from(num(r, "requests per iteration")?).map_err(|e| e.to_string())?;
        let m = num(m, "ramp-up ms")?;
        let i = u32::try_from(num(i, "iterations")?).map_err(|e| e.to_string())?;
        Ok(Self::get(String::new(), r, m, i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Http(u16),
    Timeout,
    ConnectError,
}

impl Status {
    pub fn is_success(self) -> bool {
        matches!(self, Status::Http(code) if (200..300).contains(&code))
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Http(code) => write!(f, "{code}"),
            Status::Timeout => f.write_str("timeout"),
            Status::ConnectError => f.write_str("connect_error"),
        }
    }
}

impl FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "timeout" => Ok(Status::Timeout),
            "connect_error" => Ok(Status::ConnectError),
            other => other
                .parse()
                .map(Status::Http)
                .map_err(|_| format!("unknown status {other:?}")),
        }
    }
}

impl Serialize for Status {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Status {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One request. Timestamps are UTC milliseconds with sub-ms precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub scheduled_at: f64,
    pub started_at: f64,
    pub finished_at: f64,
    pub status: Status,
    pub latency_ms: f64,
}

impl RequestRecord {
    /// How far behind schedule the request was dispatched.
    pub fn lateness_ms(&self) -> f64 {
        (self.started_at - self.scheduled_at).max(0.0)
    }
}

/// Wall clock anchored to a monotonic origin so all stamps of a run agree.
#[derive(Clone, Copy)]
struct Clock {
    origin: Instant,
    origin_ms: f64,
}

impl Clock {
    fn new() -> Self {
        let since = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
        Self {
            origin: Instant::now(),
            origin_ms: since.as_secs_f64() * 1000.0,
        }
    }

    fn ms(&self, at: Instant) -> f64 {
        self.origin_ms + at.duration_since(self.origin).as_secs_f64() * 1000.0
    }
}

fn classify(e: &reqwest::Error) -> Status {
    if e.is_timeout() {
        Status::Timeout
    } else {
        Status::ConnectError
    }
}

fn request(client: &Client, profile: &LoadProfile) -> reqwest::RequestBuilder {
    let mut req = client
        .request(profile.method.clone(), &profile.target_url)
        .timeout(Duration::from_millis(profile.timeout_ms));
    for (k, v) in &profile.headers {
        req = req.header(k, v);
    }
    if let Some(body) = &profile.body {
        req = req.header("content-type", "application/json").body(body.clone());
    }
    req
}

async fn one(client: &Client, profile: &LoadProfile) -> Status {
    match request(client, profile).send().await {
        Ok(resp) => {
            let status = resp.status().as_u16();
            // Drain the body so latency covers the full response.
            match resp.bytes().await {
                Ok(_) => Status::Http(status),
                Err(e) => classify(&e),
            }
        }
        Err(e) => classify(&e),
    }
}

/// The target must answer 2xx. A 503 or timeout is retried for a short while
/// since a replica can be briefly out of rotation after a previous run.
async fn preflight(client: &Client, profile: &LoadProfile) -> Result<(), HarnessError> {
    let deadline = Instant::now() + PREFLIGHT_BUDGET;
    loop {
        let status = one(client, profile).await;
        match status {
            Status::Http(code) if (200..300).contains(&code) => return Ok(()),
            Status::Http(503) | Status::Timeout if Instant::now() < deadline => {
                tokio::time::sleep(PREFLIGHT_RETRY).await;
            }
            other => {
                return Err(HarnessError::Preflight {
                    url: profile.target_url.clone(),
                    reason: other.to_string(),
                })
            }
        }
    }
}

/// Runs `profile` and returns its records in schedule order.
pub async fn generate_load(profile: &LoadProfile) -> Result<Vec<RequestRecord>, HarnessError> {
    profile.validate()?;
    let client = Client::builder()
        .pool_max_idle_per_host(usize::MAX)
        .build()
        .map_err(|e| HarnessError::Profile(e.to_string()))?;
    preflight(&client, profile).await?;

    let offsets = profile.schedule();
    let profile = Arc::new(profile.clone());
    let clock = Clock::new();
    let start = Instant::now() + Duration::from_millis(5);
    let mut tasks = JoinSet::new();
    for (n, offset) in offsets.iter().enumerate() {
        let at = start + Duration::from_secs_f64(offset / 1000.0);
        tokio::time::sleep_until(at.into()).await;
        let (client, profile) = (client.clone(), Arc::clone(&profile));
        tasks.spawn(async move {
            let started = Instant::now();
            let status = one(&client, &profile).await;
            let finished = Instant::now();
            let record = RequestRecord {
                scheduled_at: clock.ms(at),
                started_at: clock.ms(started),
                finished_at: clock.ms(finished),
                status,
                latency_ms: finished.duration_since(started).as_secs_f64() * 1000.0,
            };
            (n, record)
        });
    }
    let mut slots: Vec<Option<RequestRecord>> = vec![None; offsets.len()];
    while let Some(done) = tasks.join_next().await {
        match done {
            Ok((n, record)) => slots[n] = Some(record),
            Err(e) => return Err(HarnessError::Profile(format!("request task failed: {e}"))),
        }
    }
    Ok(slots.into_iter().map(|r| r.expect("every slot filled")).collect())
}
