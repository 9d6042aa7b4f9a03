use bookstore_harness::{summarize, RequestRecord, Status};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

/// Smallest success latency v with at least p% of successes at or below it.
fn oracle_percentile(values: &[f64], p: u32) -> Option<f64> {
    let n = values.len();
    let mut candidates = values.to_vec();
    candidates.sort_by(f64::total_cmp);
    candidates
        .into_iter()
        .find(|&v| values.iter().filter(|&&x| x <= v).count() * 100 >= p as usize * n)
}

fn records(latencies: &[f64], statuses: &[u16]) -> Vec<RequestRecord> {
    latencies
        .iter()
        .zip(statuses)
        .enumerate()
        .map(|(i, (&l, &s))| RequestRecord {
            scheduled_at: i as f64,
            started_at: i as f64,
            finished_at: i as f64 + l,
            status: Status::Http(s),
            latency_ms: l,
        })
        .collect()
}

fn check(recs: &[RequestRecord]) {
    let ok: Vec<f64> = recs.iter().filter(|r| r.status.is_success()).map(|r| r.latency_ms).collect();
    let r = summarize(recs);
    assert_eq!(r.count, recs.len());
    assert_eq!(r.error_count, recs.len() - ok.len());
    for (p, got) in [(50, r.p50_ms), (95, r.p95_ms), (99, r.p99_ms), (100, r.max_ms)] {
        assert_eq!(got, oracle_percentile(&ok, p), "p{p}");
    }
    let mut total = 0.0;
    for v in &ok {
        total += v;
    }
    assert_eq!(r.mean_ms, (!ok.is_empty()).then(|| total / ok.len() as f64));
}

#[test]
fn matches_sort_oracle_on_1000_vectors() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(0x5eed);
    for _ in 0..1000 {
        let n = rng.random_range(1..=400);
        let lat: Vec<f64> = (0..n)
            .map(|_| match rng.random_range(0..3) {
                0 => rng.random_range(1..50) as f64,
                _ => rng.random_range(0.01..5000.0),
            })
            .collect();
        let st: Vec<u16> = (0..n)
            .map(|_| if rng.random_bool(0.9) { 200 } else { 503 })
            .collect();
        check(&records(&lat, &st));
    }
}

proptest! {
    #[test]
    fn matches_sort_oracle(lat in prop::collection::vec(0.0f64..10_000.0, 1..200), fail in prop::collection::vec(any::<bool>(), 200)) {
        let st: Vec<u16> = fail.iter().map(|&f| if f { 500 } else { 200 }).collect();
        check(&records(&lat, &st));
    }
}
