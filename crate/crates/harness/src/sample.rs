//! Periodic CPU and RSS sampling of replica processes.
//!
//! `cpu_percent` is relative to one core, so a process saturating two cores
//! reads 200.

use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use bookstore_core::procfs;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleTarget {
    pub deployment: String,
    pub replica: u32,
    pub pid: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    /// UTC milliseconds.
    pub ts: f64,
    pub deployment: String,
    pub replica: u32,
    pub cpu_percent: f64,
    pub rss_bytes: u64,
}

fn wall_ms() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or_default()
        .as_secs_f64()
        * 1000.0
}

/// Keeps the previous CPU reading of each live target so every call to
/// [`Sampler::sample`] reports utilization since the last one.
pub struct Sampler {
    tracked: Vec<Tracked>,
}

struct Tracked {
    target: SampleTarget,
    cpu: Duration,
    at: Instant,
}

impl Sampler {
    /// Targets that are not alive now are dropped.
    pub fn new(targets: &[SampleTarget]) -> Self {
        let tracked = targets
            .iter()
            .filter_map(|t| {
                let at = Instant::now();
                procfs::read(t.pid).ok().map(|s| Tracked {
                    target: t.clone(),
                    cpu: s.cpu_time,
                    at,
                })
            })
            .collect();
        Self { tracked }
    }

    pub fn live(&self) -> usize {
        self.tracked.len()
    }

    /// One point per still-live target. Exited processes stop producing points.
    pub fn sample(&mut self) -> Vec<SamplePoint> {
        let ts = wall_ms();
        let mut points = Vec::with_capacity(self.tracked.len());
        self.tracked.retain_mut(|t| {
            if !procfs::is_alive(t.target.pid) {
                return false;
            }
            let Ok(stat) = procfs::read(t.target.pid) else {
                return false;
            };
            let now = Instant::now();
            let wall = now.duration_since(t.at).as_secs_f64();
            let cpu = stat.cpu_time.saturating_sub(t.cpu).as_secs_f64();
            points.push(SamplePoint {
                ts,
                deployment: t.target.deployment.clone(),
                replica: t.target.replica,
                cpu_percent: if wall > 0.0 { cpu / wall * 100.0 } else { 0.0 },
                rss_bytes: stat.rss_bytes,
            });
            t.cpu = stat.cpu_time;
            t.at = now;
            true
        });
        points
    }
}

/// Samples every `interval` until `duration` has elapsed: `duration / interval`
/// ticks per process that stays alive.
pub async fn sample_resources(targets: &[SampleTarget], interval: Duration, duration: Duration) -> Vec<SamplePoint> {
    let mut sampler = Sampler::new(targets);
    let interval = interval.max(Duration::from_millis(1));
    let ticks = (duration.as_nanos() / interval.as_nanos()) as u32;
    let start = tokio::time::Instant::now();
    let mut points = Vec::new();
    for tick in 1..=ticks {
        tokio::time::sleep_until(start + interval * tick).await;
        points.extend(sampler.sample());
    }
    points
}
