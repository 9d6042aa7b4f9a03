//! Pure planning logic of the conductor.
//!
//! Nothing here touches processes or sockets; the runtime feeds observations
//! in and applies the returned actions.

use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

/// Consecutive probe failures that demote Ready to Unhealthy, and again
/// Unhealthy to Failed.
pub const PROBE_FAILURE_THRESHOLD: u32 = 3;
pub const PROBE_INTERVAL: Duration = Duration::from_millis(250);
pub const PROBE_TIMEOUT: Duration = Duration::from_millis(200);
pub const STARTUP_BUDGET: Duration = Duration::from_secs(30);

pub const BACKOFF_BASE: Duration = Duration::from_secs(1);
pub const BACKOFF_CAP: Duration = Duration::from_secs(30);
pub const BACKOFF_RESET_AFTER: Duration = Duration::from_secs(600);

pub const AUTOSCALE_WINDOW: Duration = Duration::from_secs(15);
pub const AUTOSCALE_COOLDOWN: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Pending,
    Starting,
    Ready,
    Unhealthy,
    Failed,
    Terminated,
}

impl Phase {
    pub const ALL: [Phase; 6] = [
        Phase::Pending,
        Phase::Starting,
        Phase::Ready,
        Phase::Unhealthy,
        Phase::Failed,
        Phase::Terminated,
    ];

    /// Whether moving from `self` to `next` is a legal lifecycle step.
    pub fn can_become(self, next: Phase) -> bool {
        use Phase::*;
        matches!(
            (self, next),
            (Pending, Starting)
                | (Starting, Ready)
                | (Starting, Failed)
                | (Ready, Unhealthy)
                | (Unhealthy, Ready)
                | (Unhealthy, Failed)
                | (_, Terminated)
        ) && self != Terminated
    }
}

/// What the planner needs to know about one replica slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObservedReplica {
    pub index: u32,
    pub phase: Phase,
    /// For Failed replicas: whether the restart backoff has elapsed.
    pub restart_eligible: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Start { deployment: String, index: u32 },
    Stop { deployment: String, index: u32 },
}

impl Action {
    pub fn start(deployment: &str, index: u32) -> Self {
        Action::Start {
            deployment: deployment.to_string(),
            index,
        }
    }

    pub fn stop(deployment: &str, index: u32) -> Self {
        Action::Stop {
            deployment: deployment.to_string(),
            index,
        }
    }
}

/// Plans the actions that bring `observed` to `desired` replica counts.
///
/// Slots `0..desired` must hold a live replica: empty or Terminated slots are
/// started, Failed slots whose backoff has elapsed are stopped and started
/// again. Live slots at or above `desired` are stopped, as is every replica
/// of a deployment that is no longer desired. Actions are ordered by
/// deployment name, then slot index.
pub fn reconcile_once(
    desired: &BTreeMap<String, u32>,
    observed: &BTreeMap<String, Vec<ObservedReplica>>,
) -> Vec<Action> {
    let mut actions = Vec::new();
    let empty = Vec::new();
    let mut names: Vec<&String> = desired.keys().chain(observed.keys()).collect();
    names.sort();
    names.dedup();

    for name in names {
        let want = desired.get(name).copied().unwrap_or(0);
        let replicas = observed.get(name).unwrap_or(&empty);
        let by_index: BTreeMap<u32, &ObservedReplica> =
            replicas.iter().map(|r| (r.index, r)).collect();
        let top = by_index
            .keys()
            .next_back()
            .map_or(want, |&i| want.max(i + 1));
        for index in 0..top {
            let slot = by_index.get(&index);
            if index < want {
                match slot.map(|r| (r.phase, r.restart_eligible)) {
                    None | Some((Phase::Terminated, _)) => actions.push(Action::start(name, index)),
                    Some((Phase::Failed, true)) => {
                        actions.push(Action::stop(name, index));
                        actions.push(Action::start(name, index));
                    }
                    Some(_) => {}
                }
            } else if matches!(slot, Some(r) if r.phase != Phase::Terminated) {
                actions.push(Action::stop(name, index));
            }
        }
    }
    actions
}

/// Outcome of feeding one probe result to a [`ProbeTracker`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub from: Phase,
    pub to: Phase,
}

/// Health-probe state machine of one replica.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeTracker {
    phase: Phase,
    consecutive_failures: u32,
}

impl ProbeTracker {
    pub fn new(phase: Phase) -> Self {
        Self {
            phase,
            consecutive_failures: 0,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn consecutive_failures(&self) -> u32 {
        self.consecutive_failures
    }

    /// Forces a phase, e.g. Failed on process exit or Terminated on stop.
    pub fn set(&mut self, phase: Phase) {
        self.phase = phase;
        self.consecutive_failures = 0;
    }

    /// Applies one probe outcome and reports a phase change, if any.
    pub fn observe(&mut self, healthy: bool) -> Option<Transition> {
        let from = self.phase;
        let to = match (from, healthy) {
            (Phase::Starting, true) => Phase::Ready,
            (Phase::Starting, false) => Phase::Starting,
            (Phase::Ready, true) | (Phase::Unhealthy, true) => {
                self.consecutive_failures = 0;
                Phase::Ready
            }
            (Phase::Ready, false) => {
                self.consecutive_failures += 1;
                if self.consecutive_failures >= PROBE_FAILURE_THRESHOLD {
                    Phase::Unhealthy
                } else {
                    Phase::Ready
                }
            }
            (Phase::Unhealthy, false) => {
                self.consecutive_failures += 1;
                if self.consecutive_failures >= 2 * PROBE_FAILURE_THRESHOLD {
                    Phase::Failed
                } else {
                    Phase::Unhealthy
                }
            }
            (p, _) => p,
        };
        if to == from {
            return None;
        }
        if to == Phase::Ready {
            self.consecutive_failures = 0;
        }
        self.phase = to;
        Some(Transition { from, to })
    }
}

/// Delay before restarting a replica that has failed `streak` times in a
/// row: `1s * 2^streak`, capped at 30s.
pub fn restart_backoff(streak: u32) -> Duration {
    let factor = 1u64.checked_shl(streak).unwrap_or(u64::MAX);
    BACKOFF_BASE
        .checked_mul(factor.min(u32::MAX as u64) as u32)
        .map_or(BACKOFF_CAP, |d| d.min(BACKOFF_CAP))
}

/// Replica count proportional to observed-vs-target CPU:
/// `clamp(ceil(current * mean / target), min, max)`. No samples, no change.
pub fn autoscale_desired(
    current: u32,
    cpu_samples: &[f64],
    target_percent: u8,
    min_replicas: u32,
    max_replicas: u32,
) -> u32 {
    if cpu_samples.is_empty() || target_percent == 0 {
        return current;
    }
    let mean = cpu_samples.iter().sum::<f64>() / cpu_samples.len() as f64;
    let raw = current as f64 * mean / target_percent as f64;
    // Absorb float noise so that mean == target maps back onto `current`.
    let desired = (raw - 1e-9).ceil().max(0.0);
    let desired = if desired > u32::MAX as f64 {
        u32::MAX
    } else {
        desired as u32
    };
    desired.clamp(min_replicas, max_replicas.max(min_replicas))
}

/// Sliding CPU window plus cooldown for one autoscaled deployment.
#[derive(Debug, Clone, Default)]
pub struct AutoscaleWindow {
    samples: VecDeque<(u64, f64)>,
    last_change_ms: Option<u64>,
}

impl AutoscaleWindow {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, at_ms: u64, cpu_percent: f64) {
        self.samples.push_back((at_ms, cpu_percent));
    }

    fn prune(&mut self, now_ms: u64) {
        let horizon = now_ms.saturating_sub(AUTOSCALE_WINDOW.as_millis() as u64);
        while matches!(self.samples.front(), Some(&(t, _)) if t < horizon) {
            self.samples.pop_front();
        }
    }

    pub fn samples(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|&(_, v)| v)
    }

    /// Marks a replica count change made outside the autoscaler so the
    /// cooldown applies to it too.
    pub fn note_change(&mut self, now_ms: u64) {
        self.last_change_ms = Some(now_ms);
    }

    /// Returns a new replica count when one is due.
    pub fn tick(
        &mut self,
        now_ms: u64,
        current: u32,
        target_percent: u8,
        min_replicas: u32,
        max_replicas: u32,
    ) -> Option<u32> {
        self.prune(now_ms);
        if let Some(last) = self.last_change_ms {
            if now_ms.saturating_sub(last) < AUTOSCALE_COOLDOWN.as_millis() as u64 {
                return None;
            }
        }
        let samples: Vec<f64> = self.samples().collect();
        let desired = autoscale_desired(current, &samples, target_percent, min_replicas, max_replicas);
        if desired == current {
            return None;
        }
        self.last_change_ms = Some(now_ms);
        Some(desired)
    }
}

/// Strict rotation over however many backends are currently eligible.
#[derive(Debug, Default)]
pub struct RoundRobin {
    cursor: AtomicUsize,
}

impl RoundRobin {
    pub fn new() -> Self {
        Self::default()
    }

    /// Index into a backend list of length `n`, or `None` if it is empty.
    pub fn pick(&self, n: usize) -> Option<usize> {
        if n == 0 {
            return None;
        }
        Some(self.cursor.fetch_add(1, Ordering::Relaxed) % n)
    }
}
