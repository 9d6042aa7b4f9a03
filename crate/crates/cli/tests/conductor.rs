//! Conductor behavior that needs real service binaries behind health probes.

mod common;

use std::collections::HashMap;
use std::time::{Duration, Instant};

use bookstore_conductor::proxy::REPLICA_HEADER;
use bookstore_core::Phase;
use common::{conductor, free_block, stub_manifest, wait_ready};

async fn replica_counts(url: &str, n: usize) -> HashMap<String, usize> {
    let http = reqwest::Client::new();
    let mut counts = HashMap::new();
    for _ in 0..n {
        let r = http.get(url).send().await.unwrap();
        assert_eq!(r.status(), 200);
        *counts.entry(r.headers()[REPLICA_HEADER].to_str().unwrap().to_string()).or_insert(0) += 1;
    }
    counts
}

#[tokio::test]
async fn rotation_is_exact_and_follows_scaling() {
    let root = tempfile::tempdir().unwrap();
    let (c, admin) = conductor(root.path()).await;
    let port = free_block(1);
    admin.apply(&stub_manifest(4, 0, Some(port))).await.unwrap();
    wait_ready(&admin, 4).await;
    let url = format!("http://127.0.0.1:{port}/");
    let counts = replica_counts(&url, 100).await;
    assert_eq!(counts.len(), 4);
    assert!(counts.values().all(|&n| n == 25), "{counts:?}");

    admin.scale("stub", 2).await.unwrap();
    let (ok, _) = admin
        .wait_for(Duration::from_secs(10), |s| {
            s.deployment("stub").is_some_and(|d| d.replicas.len() == 2 && d.ready() == 2)
        })
        .await
        .unwrap();
    assert!(ok);
    let counts = replica_counts(&url, 100).await;
    assert_eq!(counts.get("stub/0"), Some(&50));
    assert_eq!(counts.get("stub/1"), Some(&50));
    c.stop().await;
}

#[tokio::test]
async fn killed_replica_is_replaced_without_client_errors() {
    let root = tempfile::tempdir().unwrap();
    let (c, admin) = conductor(root.path()).await;
    let port = free_block(1);
    admin.apply(&stub_manifest(2, 0, Some(port))).await.unwrap();
    let before = wait_ready(&admin, 2).await;
    let old_pid = before.deployment("stub").unwrap().replica(1).unwrap().pid;

    admin.kill("stub", 1).await.unwrap();
    let killed = Instant::now();
    let http = reqwest::Client::new();
    let url = format!("http://127.0.0.1:{port}/");
    let mut statuses = Vec::new();
    let mut healed = None;
    while killed.elapsed() < Duration::from_secs(6) {
        statuses.push(http.get(&url).send().await.unwrap().status().as_u16());
        let state = admin.state().await.unwrap();
        let dep = state.deployment("stub").unwrap();
        if healed.is_none() && dep.ready() == 2 {
            healed = Some(killed.elapsed());
            let r = dep.replica(1).unwrap();
            assert_ne!(r.pid, old_pid);
            assert_eq!(r.restarts, 1);
        }
        if healed.is_some() && statuses.len() > 20 {
            break;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    let healed = healed.expect("replacement Ready");
    assert!(healed < Duration::from_secs(5), "healed after {healed:?}");
    assert!(statuses.iter().all(|&s| s == 200), "{statuses:?}");
    c.stop().await;
}

#[tokio::test]
async fn unknown_binary_fails_and_backs_off() {
    let root = tempfile::tempdir().unwrap();
    let (c, admin) = conductor(root.path()).await;
    admin
        .apply("deployment ghost\n  replicas 1\n  exec bookstore-no-such-binary\nend\n")
        .await
        .unwrap();
    let (ok, state) = admin
        .wait_for(Duration::from_secs(5), |s| {
            s.deployment("ghost")
                .and_then(|d| d.replica(0))
                .is_some_and(|r| r.phase == Phase::Failed)
        })
        .await
        .unwrap();
    assert!(ok, "{state:?}");
    c.stop().await;
}
