//! Latency statistics over a set of request records.

use serde::{Deserialize, Serialize};

use crate::load::RequestRecord;

/// Latency fields are `None` when no request succeeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub count: usize,
    pub error_count: usize,
    pub mean_ms: Option<f64>,
    pub p50_ms: Option<f64>,
    pub p95_ms: Option<f64>,
    pub p99_ms: Option<f64>,
    pub max_ms: Option<f64>,
    pub throughput_rps: Option<f64>,
    /// Largest gap between a request's scheduled and actual dispatch.
    pub max_lateness_ms: Option<f64>,
}

/// Nearest-rank percentile of an ascending slice: element `ceil(p*n/100) - 1`.
pub fn nearest_rank(sorted: &[f64], p: u32) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len() as u64;
    let rank = (p as u64 * n).div_ceil(100).max(1);
    Some(sorted[(rank - 1) as usize])
}

pub fn summarize(records: &[RequestRecord]) -> LatencyReport {
    let ok: Vec<&RequestRecord> = records.iter().filter(|r| r.status.is_success()).collect();
    let mut sorted: Vec<f64> = ok.iter().map(|r| r.latency_ms).collect();
    sorted.sort_by(f64::total_cmp);

    let mean = (!ok.is_empty()).then(|| ok.iter().map(|r| r.latency_ms).sum::<f64>() / ok.len() as f64);
    let span_ms = records
        .iter()
        .map(|r| r.finished_at)
        .reduce(f64::max)
        .zip(records.iter().map(|r| r.started_at).reduce(f64::min))
        .map(|(end, start)| end - start);
    let throughput = match span_ms {
        Some(span) if span > 0.0 && !ok.is_empty() => Some(ok.len() as f64 / (span / 1000.0)),
        _ => None,
    };

    LatencyReport {
        count: records.len(),
        error_count: records.len() - ok.len(),
        mean_ms: mean,
        p50_ms: nearest_rank(&sorted, 50),
        p95_ms: nearest_rank(&sorted, 95),
        p99_ms: nearest_rank(&sorted, 99),
        max_ms: sorted.last().copied(),
        throughput_rps: throughput,
        max_lateness_ms: records.iter().map(RequestRecord::lateness_ms).reduce(f64::max),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::load::Status;

    fn rec(latency: f64, status: Status) -> RequestRecord {
        RequestRecord {
            scheduled_at: 0.0,
            started_at: 0.0,
            finished_at: latency,
            status,
            latency_ms: latency,
        }
    }

    #[test]
    fn small_vectors() {
        let r = summarize(&[rec(300.0, Status::Http(200)), rec(100.0, Status::Http(200)), rec(200.0, Status::Http(200))]);
        assert_eq!((r.mean_ms, r.p50_ms, r.p99_ms, r.max_ms), (Some(200.0), Some(200.0), Some(300.0), Some(300.0)));
        let r = summarize(&vec![rec(100.0, Status::Http(200)); 3]);
        assert_eq!((r.mean_ms, r.p50_ms, r.p99_ms), (Some(100.0), Some(100.0), Some(100.0)));
    }

    #[test]
    fn errors_excluded_from_latency() {
        let r = summarize(&[rec(50.0, Status::Http(200)), rec(9000.0, Status::Http(500)), rec(5000.0, Status::Timeout)]);
        assert_eq!((r.count, r.error_count), (3, 2));
        assert_eq!(r.max_ms, Some(50.0));
        // One success over a 9s span.
        assert!((r.throughput_rps.unwrap() - 1.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn all_errors_give_null_latency() {
        let r = summarize(&[rec(1.0, Status::ConnectError), rec(2.0, Status::Http(503))]);
        assert_eq!((r.count, r.error_count), (2, 2));
        assert!(r.mean_ms.is_none() && r.p50_ms.is_none() && r.max_ms.is_none() && r.throughput_rps.is_none());
    }

    #[test]
    fn rank_edges() {
        assert_eq!(nearest_rank(&[], 50), None);
        assert_eq!(nearest_rank(&[7.0], 1), Some(7.0));
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 95), Some(95.0));
        assert_eq!(nearest_rank(&v, 0), Some(1.0));
    }
}
