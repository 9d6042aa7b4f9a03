//! Per-process CPU time and resident set size from `/proc`.

use std::fs;
use std::io;
use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProcessStat {
    /// User plus system CPU time consumed so far.
    pub cpu_time: Duration,
    pub rss_bytes: u64,
}

fn clock_ticks_per_sec() -> u64 {
    // SAFETY: sysconf has no preconditions.
    let ticks = unsafe { libc::sysconf(libc::_SC_CLK_TCK) };
    if ticks > 0 {
        ticks as u64
    } else {
        100
    }
}

fn page_size() -> u64 {
    // SAFETY: sysconf has no preconditions.
    let size = unsafe { libc::sysconf(libc::_SC_PAGESIZE) };
    if size > 0 {
        size as u64
    } else {
        4096
    }
}

fn invalid(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}

/// Parses the utime and stime fields (in clock ticks) of a `/proc/<pid>/stat` line.
pub fn parse_stat_ticks(stat: &str) -> io::Result<(u64, u64)> {
    // The command name may contain spaces and parentheses; fields resume
    // after the last ')'.
    let after = stat
        .rfind(')')
        .map(|i| &stat[i + 1..])
        .ok_or_else(|| invalid("stat line has no command field"))?;
    let fields: Vec<&str> = after.split_whitespace().collect();
    // fields[0] is the state (field 3); utime and stime are fields 14 and 15.
    let utime = fields.get(11).ok_or_else(|| invalid("stat line too short"))?;
    let stime = fields.get(12).ok_or_else(|| invalid("stat line too short"))?;
    let parse = |s: &str| s.parse::<u64>().map_err(|_| invalid("non-numeric tick count"));
    Ok((parse(utime)?, parse(stime)?))
}

pub fn read(pid: u32) -> io::Result<ProcessStat> {
    let stat = fs::read_to_string(format!("/proc/{pid}/stat"))?;
    let (utime, stime) = parse_stat_ticks(&stat)?;
    let statm = fs::read_to_string(format!("/proc/{pid}/statm"))?;
    let resident_pages: u64 = statm
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| invalid("malformed statm"))?;
    let ticks = utime + stime;
    let hz = clock_ticks_per_sec();
    Ok(ProcessStat {
        cpu_time: Duration::from_micros(ticks * 1_000_000 / hz),
        rss_bytes: resident_pages * page_size(),
    })
}

/// Whether `pid` names a live, non-zombie process.
pub fn is_alive(pid: u32) -> bool {
    match fs::read_to_string(format!("/proc/{pid}/stat")) {
        Ok(stat) => stat
            .rfind(')')
            .and_then(|i| stat[i + 1..].split_whitespace().next())
            .is_some_and(|state| state != "Z" && state != "X"),
        Err(_) => false,
    }
}
