//! Host description embedded in every report; absolute numbers are host-bound.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HostInfo {
    pub cpus: usize,
    pub os: String,
    pub kernel: String,
    pub arch: String,
    pub memory_bytes: Option<u64>,
}

fn mem_total() -> Option<u64> {
    let meminfo = std::fs::read_to_string("/proc/meminfo").ok()?;
    let line = meminfo.lines().find(|l| l.starts_with("MemTotal:"))?;
    let kib: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kib * 1024)
}

impl HostInfo {
    pub fn detect() -> Self {
        Self {
            cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            os: std::env::consts::OS.to_string(),
            kernel: std::fs::read_to_string("/proc/sys/kernel/osrelease")
                .map(|s| s.trim().to_string())
                .unwrap_or_else(|_| "unknown".into()),
            arch: std::env::consts::ARCH.to_string(),
            memory_bytes: mem_total(),
        }
    }

    pub fn header(&self) -> String {
        let mem = self
            .memory_bytes
            .map_or("unknown".to_string(), |b| format!("{:.1} GiB", b as f64 / (1u64 << 30) as f64));
        format!(
            "host: {} cpus, {} {} ({}), memory {mem}",
            self.cpus, self.os, self.kernel, self.arch
        )
    }
}
