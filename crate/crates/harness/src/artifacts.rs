//! Run artifacts: `records.csv`, `samples.csv`, `report.csv`, `report.txt`.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::load::RequestRecord;
use crate::sample::SamplePoint;
use crate::summary::LatencyReport;
use crate::HarnessError;

pub const RECORDS_CSV: &str = "records.csv";
pub const SAMPLES_CSV: &str = "samples.csv";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TXT: &str = "report.txt";

/// One `(scenario, metric, value)` row of `report.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: String,
    pub metric: String,
    pub value: f64,
}

impl ReportRow {
    pub fn new(scenario: impl Into<String>, metric: impl Into<String>, value: f64) -> Self {
        Self {
            scenario: scenario.into(),
            metric: metric.into(),
            value,
        }
    }
}

fn path_error(path: &Path, e: csv::Error) -> HarnessError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => HarnessError::Path {
            path: path.to_path_buf(),
            source,
        },
        other => HarnessError::Path {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{other:?}")),
        },
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| path_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| path_error(path, e))?;
    }
    w.flush().map_err(|source| HarnessError::Path {
        path: path.to_path_buf(),
        source,
    })
}

/// Appends to `path`, writing the header only when the file is new or empty.
pub fn append_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let fresh = std::fs::metadata(path).map_or(true, |m| m.len() == 0);
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|source| HarnessError::Path {
            path: path.to_path_buf(),
            source,
        })?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for row in rows {
        w.serialize(row).map_err(|e| path_error(path, e))?;
    }
    w.flush().map_err(|source| HarnessError::Path {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| path_error(path, e))?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| path_error(path, e))
}

pub fn records_path(dir: &Path, target: Option<&str>) -> PathBuf {
    match target {
        Some(t) => dir.join(format!("records-{t}.csv")),
        None => dir.join(RECORDS_CSV),
    }
}

pub fn write_records(path: &Path, records: &[RequestRecord]) -> Result<(), HarnessError> {
    write_csv(path, records)
}

pub fn read_records(path: &Path) -> Result<Vec<RequestRecord>, HarnessError> {
    read_csv(path)
}

pub fn write_samples(path: &Path, samples: &[SamplePoint]) -> Result<(), HarnessError> {
    write_csv(path, samples)
}

pub fn read_samples(path: &Path) -> Result<Vec<SamplePoint>, HarnessError> {
    read_csv(path)
}

/// Flattens a latency report into rows under `scenario`. Null fields are skipped.
pub fn latency_rows(scenario: &str, report: &LatencyReport) -> Vec<ReportRow> {
    let fields = [
        ("count", Some(report.count as f64)),
        ("error_count", Some(report.error_count as f64)),
        ("mean_ms", report.mean_ms),
        ("p50_ms", report.p50_ms),
        ("p95_ms", report.p95_ms),
        ("p99_ms", report.p99_ms),
        ("max_ms", report.max_ms),
        ("throughput_rps", report.throughput_rps),
        ("max_lateness_ms", report.max_lateness_ms),
    ];
    fields
        .into_iter()
        .filter_map(|(metric, v)| v.map(|v| ReportRow::new(scenario, metric, v)))
        .collect()
}

/// Mean and peak CPU and peak RSS per deployment, summed across replicas per tick.
pub fn resource_rows(scenario: &str, samples: &[SamplePoint]) -> Vec<ReportRow> {
    use std::collections::BTreeMap;
    // deployment -> tick timestamp (as bits, ticks share one ts) -> (cpu, rss)
    let mut per_tick: BTreeMap<&str, BTreeMap<u64, (f64, u64)>> = BTreeMap::new();
    for s in samples {
        let slot = per_tick
            .entry(&s.deployment)
            .or_default()
            .entry(s.ts.to_bits())
            .or_default();
        slot.0 += s.cpu_percent;
        slot.1 += s.rss_bytes;
    }
    let mut rows = Vec::new();
    for (dep, ticks) in per_tick {
        let n = ticks.len() as f64;
        let scen = format!("{scenario}/{dep}");
        let cpu_mean = ticks.values().map(|t| t.0).sum::<f64>() / n;
        let cpu_peak = ticks.values().map(|t| t.0).fold(0.0, f64::max);
        let rss_peak = ticks.values().map(|t| t.1).max().unwrap_or(0);
        rows.push(ReportRow::new(&scen, "cpu_percent_mean", cpu_mean));
        rows.push(ReportRow::new(&scen, "cpu_percent_peak", cpu_peak));
        rows.push(ReportRow::new(&scen, "rss_bytes_peak", rss_peak as f64));
    }
    rows
}
