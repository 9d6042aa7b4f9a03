//! The `bench` binary end to end against the shipped manifest.

mod common;

use std::collections::HashMap;
use std::net::TcpListener;

use common::{code, text, Shipped};
use serde_json::Value;

async fn book_count(url: &str) -> usize {
    let books: Vec<Value> = reqwest::get(format!("{url}/books")).await.unwrap().json().await.unwrap();
    books.len()
}

fn csv_maps(path: &std::path::Path) -> Vec<HashMap<String, String>> {
    csv::Reader::from_path(path).unwrap().deserialize().map(Result::unwrap).collect()
}

fn csv_rows(path: &std::path::Path) -> usize {
    csv::Reader::from_path(path).unwrap().records().count()
}

#[tokio::test]
async fn operator_workflow() {
    let s = Shipped::new();

    let out = s.bench(&["down"]);
    assert_eq!(code(&out), 0, "{}", text(&out));
    let out = s.bench(&["seed", "--catalog", "catalog.csv"]);
    assert_eq!(code(&out), 2, "seed without a cluster: {}", text(&out));

    let out = s.bench(&["up", "-f", "bookstore.manifest"]);
    assert_eq!(code(&out), 0, "{}", text(&out));
    let state = s.admin().state().await.unwrap();
    assert_eq!(state.deployments.len(), 6);
    assert!(state.all_ready());

    let out = s.bench(&["seed", "--catalog", "catalog.csv"]);
    assert_eq!(code(&out), 0, "{}", text(&out));
    assert_eq!(book_count(&s.url("books")).await, 20);
    let out = s.bench(&["seed", "--catalog", "catalog.csv"]);
    assert_eq!(code(&out), 0, "{}", text(&out));
    assert_eq!(book_count(&s.url("books")).await, 20);

    std::fs::write(
        s.path("bad.csv"),
        "title,author,price_cents,quantity\nFresh One,A,100,1\nBroken,B,abc,2\nFresh Two,C,200,3\n",
    )
    .unwrap();
    let out = s.bench(&["seed", "--catalog", "bad.csv"]);
    assert_eq!(code(&out), 1);
    assert!(text(&out).contains("row 3"), "{}", text(&out));
    assert_eq!(book_count(&s.url("books")).await, 22);

    let out = s.bench(&["bench", "--scenario", "load", "--profile", "10,100,2", "-o", "run-a"]);
    assert_eq!(code(&out), 0, "{}", text(&out));
    for svc in ["books", "orders", "ui"] {
        assert_eq!(csv_rows(&s.path(&format!("run-a/records-{svc}.csv"))), 20, "{svc}");
    }
    let report = std::fs::read_to_string(s.path("run-a/report.txt")).unwrap();
    assert!(report.contains("host: ") && report.contains("GET http://127.0.0.1"));

    let out = s.bench(&["bench", "--scenario", "idle", "--duration", "2", "-o", "run-b"]);
    assert_eq!(code(&out), 0, "{}", text(&out));
    let samples = csv_rows(&s.path("run-b/samples.csv"));
    // Two ticks for each of the 7 replicas, give or take a boundary tick.
    assert!((7..=21).contains(&samples), "{samples} samples");
    assert!(!s.path("run-b/records-books.csv").exists());

    let out = s.bench(&["boot-time", "--service", "datastore", "-o", "run-a"]);
    assert_eq!(code(&out), 0, "{}", text(&out));
    let boot = csv_maps(&s.path("run-a/boot.csv"));
    assert!(boot[0]["boot_ms"].parse::<f64>().unwrap() > 0.0);
    assert_eq!(book_count(&s.url("books")).await, 22, "data survives the datastore kill");

    let out = s.bench(&["boot-time", "--service", "nope", "-o", "run-a"]);
    assert_eq!(code(&out), 1);

    let out = s.bench(&["footprint", "-o", "run-a"]);
    assert_eq!(code(&out), 0, "{}", text(&out));
    assert!(csv_rows(&s.path("run-a/footprint.csv")) >= 6);

    let out = s.bench(&["report", "run-a", "run-a", "-o", "cmp"]);
    assert_eq!(code(&out), 0, "{}", text(&out));
    let cmp = csv_maps(&s.path("cmp/comparison.csv"));
    assert!(!cmp.is_empty());
    assert!(cmp.iter().all(|r| r["abs_delta"].parse::<f64>() == Ok(0.0)), "{cmp:?}");
    let out = s.bench(&["report", "run-a", "--paper-overlay", "-o", "one"]);
    assert_eq!(code(&out), 0);
    let t = text(&out);
    assert!(t.contains("paper-reported (not reproduced)") && t.contains("780.000") && t.contains("625.000"));
    let out = s.bench(&["report", "run-a", "run-b", "-o", "cmp2"]);
    assert_eq!(code(&out), 1, "label mismatch");
    let out = s.bench(&["report", "nowhere", "-o", "cmp3"]);
    assert_eq!(code(&out), 1);
    assert!(text(&out).contains("nowhere/report.csv"), "{}", text(&out));

    let out = s.bench(&["down"]);
    assert_eq!(code(&out), 0, "{}", text(&out));
    let out = s.bench(&["down"]);
    assert_eq!(code(&out), 0);
    let out = s.bench(&["up", "-f", "bookstore.manifest"]);
    assert_eq!(code(&out), 0, "{}", text(&out));
    assert_eq!(book_count(&s.url("books")).await, 22, "volume survives down/up");
}

#[test]
fn up_rejects_bad_manifests_and_busy_ports() {
    let s = Shipped::new();
    std::fs::write(s.path("broken.manifest"), "deployment a\n  replicas x\nend\n").unwrap();
    let out = s.bench(&["up", "-f", "broken.manifest"]);
    assert_eq!(code(&out), 1);
    assert!(text(&out).contains("line 2"), "{}", text(&out));
    assert!(!s.admin_reachable(), "nothing started for a bad manifest");

    let out = s.bench(&["up"]);
    assert_eq!(code(&out), 1, "usage error: {}", text(&out));

    let _busy = TcpListener::bind(("127.0.0.1", s.service_base + 2)).unwrap();
    let out = s.bench(&["up", "-f", "bookstore.manifest"]);
    assert_eq!(code(&out), 2, "{}", text(&out));
    assert!(text(&out).contains("books"), "{}", text(&out));
}
