//! Measurement engine behind the `bench` command.
//!
//! * [`load`]: open-loop request generation with one record per scheduled request.
//! * [`summary`]: nearest-rank latency statistics.
//! * [`sample`]: per-process CPU and RSS sampling from `/proc`.
//! * [`boot`]: kill-to-ready timing through pluggable lifecycle hooks.
//! * [`footprint`]: bytes on disk of a set of paths.
//! * [`compare`]: side-by-side tables of two runs, plus the bundled reference values.
//! * [`artifacts`]: CSV files written to and read back from a run directory.

pub mod artifacts;
pub mod boot;
pub mod compare;
pub mod footprint;
pub mod host;
pub mod load;
pub mod reference;
pub mod sample;
pub mod summary;

pub use boot::{measure_boot_time, BootTimeResult, KillHook, LifecycleHooks};
pub use compare::{compare_runs, Comparison, RunData};
pub use footprint::{measure_footprint, FootprintReport};
pub use load::{generate_load, LoadProfile, RequestRecord, Status};
pub use reference::{paper_reference, PaperReference};
pub use sample::{sample_resources, SamplePoint, SampleTarget, Sampler};
pub use summary::{summarize, LatencyReport};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("pre-flight request to {url} failed: {reason}")]
    Preflight { url: String, reason: String },
    #[error("invalid load profile: {0}")]
    Profile(String),
    #[error("readiness url {url} is not serving before the kill: {reason}")]
    NotReady { url: String, reason: String },
    #[error("kill hook failed: {0}")]
    Kill(String),
    #[error("{}: {source}", path.display())]
    Path {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("runs differ in labels: {0}")]
    LabelMismatch(String),
    #[error("{0} not found")]
    NotFound(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
