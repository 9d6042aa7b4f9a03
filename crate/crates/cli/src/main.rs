//! `bench`: bring the bookstore up under the conductor, seed it, measure it
//! and compare runs.
//!
//! Exit codes: 0 success (a timed-out measurement still counts), 1 usage or
//! configuration error, 2 runtime failure.

mod cluster;
mod measure;
mod report;
mod seed;

use std::path::PathBuf;
use std::process::ExitCode;

use bookstore_conductor::{AdminClient, ClusterState};
use bookstore_harness::LoadProfile;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bench", version, about = "Run and measure the bookstore under the conductor")]
struct Cli {
    /// Admin port of the conductor.
    #[arg(long, global = true, env = "CONDUCTOR_ADMIN_PORT", default_value_t = bookstore_conductor::DEFAULT_ADMIN_PORT)]
    admin_port: u16,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start the conductor if needed, apply a manifest and wait until every deployment is Ready.
    Up {
        #[arg(short = 'f', long = "file")]
        manifest: PathBuf,
        /// Seconds to wait for readiness.
        #[arg(long, default_value_t = 60)]
        timeout: u64,
    },
    /// Register the admin and demo users and load a catalog CSV (title,author,price_cents,quantity).
    Seed {
        #[arg(long)]
        catalog: PathBuf,
        /// Admin credentials as user:password.
        #[arg(long, default_value = seed::DEFAULT_ADMIN)]
        admin: String,
    },
    /// Sample resources while idle, or while running the load profile against each service.
    Bench {
        #[arg(long, value_enum)]
        scenario: Scenario,
        /// Idle sampling length in seconds.
        #[arg(long, default_value_t = 30)]
        duration: u64,
        /// Requests per iteration, ramp-up ms, iterations.
        #[arg(long, default_value = "1000,1000,10")]
        profile: LoadProfile,
        /// Service to load; repeatable. Defaults to books, orders and ui.
        #[arg(long = "service")]
        services: Vec<String>,
        /// Customer credentials used for endpoints that need a session.
        #[arg(long, default_value = seed::DEFAULT_DEMO)]
        user: String,
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
    },
    /// Kill a replica and time until its replacement answers its health check.
    BootTime {
        /// Deployment name.
        #[arg(long)]
        service: String,
        #[arg(long, default_value_t = 1)]
        trials: u32,
        #[arg(long, default_value_t = 10)]
        poll_ms: u64,
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
    },
    /// Bytes on disk per deployment: executable, volume and data paths named in its env.
    Footprint {
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
    },
    /// Tabulate one run, or compare two, optionally with the bundled reference values.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        paper_overlay: bool,
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
    },
    /// Stop every replica and the conductor. Volumes are kept.
    Down,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scenario {
    Idle,
    Load,
}

/// A failed command and its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub type CmdResult = Result<(), Failure>;

pub fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

pub fn runtime(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

/// Cluster state, or a runtime failure telling the operator to run `up`.
pub async fn cluster_state(admin: &AdminClient) -> Result<ClusterState, Failure> {
    admin
        .state()
        .await
        .map_err(|e| runtime(format!("no conductor at {}: {}; run `bench up` first", admin.base(), e.message)))
}

pub fn service_url(state: &ClusterState, name: &str) -> Result<String, Failure> {
    state
        .service(name)
        .map(|s| format!("http://127.0.0.1:{}", s.listen_port))
        .ok_or_else(|| usage(format!("no service named {name:?} in the cluster")))
}

pub fn create_out_dir(dir: &std::path::Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))
}

async fn dispatch(cli: Cli) -> CmdResult {
    let admin = AdminClient::local(cli.admin_port);
    match cli.command {
        Command::Up { manifest, timeout } => cluster::up(&admin, cli.admin_port, &manifest, timeout).await,
        Command::Down => cluster::down(&admin).await,
        Command::Seed { catalog, admin: creds } => seed::seed(&admin, &catalog, &creds).await,
        Command::Bench {
            scenario,
            duration,
            profile,
            services,
            user,
            out,
        } => match scenario {
            Scenario::Idle => measure::idle(&admin, duration, &out).await,
            Scenario::Load => measure::load(&admin, &profile, &services, &user, &out).await,
        },
        Command::BootTime {
            service,
            trials,
            poll_ms,
            out,
        } => measure::boot_time(&admin, &service, trials, poll_ms, &out).await,
        Command::Footprint { out } => measure::footprint(&admin, &out).await,
        Command::Report {
            runs,
            paper_overlay,
            out,
        } => report::report(&runs, paper_overlay, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("bench: {e}");
            return ExitCode::from(2);
        }
    };
    match rt.block_on(dispatch(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("bench: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
