use std::time::Duration;

use bookstore_conductor::{AdminClient, Conductor, Config};
use bookstore_core::{procfs, Phase};

fn free_base() -> u16 {
    // A block of 300 consecutive free ports somewhere in 30000..60000.
    loop {
        let base = 30000 + (rand_u16() % 300) * 100;
        if (0..300).step_by(7).all(|i| std::net::TcpListener::bind(("127.0.0.1", base + i)).is_ok()) {
            return base;
        }
    }
}

fn rand_u16() -> u16 {
    let t = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).unwrap();
    (t.subsec_nanos() ^ std::process::id()) as u16
}

async fn conductor(root: &std::path::Path) -> (Conductor, AdminClient) {
    let c = Conductor::start(Config {
        admin_port: 0,
        data_root: root.to_path_buf(),
        replica_port_base: free_base(),
        bin_dirs: vec![],
    })
    .await
    .unwrap();
    let admin = AdminClient::new(format!("http://{}", c.admin_addr));
    (c, admin)
}

#[tokio::test]
async fn apply_starts_replicas_with_ports_env_and_volumes() {
    let root = tempfile::tempdir().unwrap();
    let (c, admin) = conductor(root.path()).await;
    let manifest = "\
volume shelf-data
  size_mb 16
end
deployment sleeper
  replicas 2
  exec sh -c 'echo \"$PORT $REPLICA_ID $DB_DIR\" > \"$VOLUME_SHELF_DATA/env-$REPLICA_ID\"; exec sleep 30'
  env DB_DIR=${VOLUME_SHELF_DATA}/db
  volume shelf-data
end
";
    let summary = admin.apply(manifest).await.unwrap();
    assert_eq!((summary.deployments, summary.services, summary.volumes), (1, 0, 1));
    let vol = root.path().join("shelf-data").canonicalize().unwrap();
    let (ok, state) = admin
        .wait_for(Duration::from_secs(5), |_| vol.join("env-0").exists() && vol.join("env-1").exists())
        .await
        .unwrap();
    assert!(ok);
    let dep = state.deployment("sleeper").unwrap();
    assert_eq!(dep.desired, 2);
    assert_eq!(dep.volume_path.as_deref(), Some(vol.to_str().unwrap()));
    let base = dep.replica(0).unwrap().port;
    assert_eq!(dep.replica(1).unwrap().port, base + 1);
    for r in &dep.replicas {
        // No /health endpoint, so they never leave Starting.
        assert_eq!(r.phase, Phase::Starting);
        assert!(procfs::is_alive(r.pid.unwrap()));
    }
    std::thread::sleep(Duration::from_millis(50));
    let line = std::fs::read_to_string(vol.join("env-1")).unwrap();
    assert_eq!(line.trim(), format!("{} 1 {}/db", base + 1, vol.display()));

    // Re-applying keeps the volume path and its contents.
    admin.apply(manifest).await.unwrap();
    assert!(vol.join("env-0").exists());

    let pids: Vec<u32> = dep.replicas.iter().filter_map(|r| r.pid).collect();
    c.stop().await;
    assert!(pids.iter().all(|&p| !procfs::is_alive(p)));
    assert!(vol.exists());
}

#[tokio::test]
async fn crashing_replica_is_failed_then_restarted_with_backoff() {
    let root = tempfile::tempdir().unwrap();
    let (c, admin) = conductor(root.path()).await;
    admin
        .apply("deployment crasher\n  replicas 1\n  exec sh -c 'exit 3'\nend\n")
        .await
        .unwrap();
    let (ok, state) = admin
        .wait_for(Duration::from_secs(3), |s| {
            s.deployment("crasher").and_then(|d| d.replica(0)).is_some_and(|r| r.phase == Phase::Failed)
        })
        .await
        .unwrap();
    assert!(ok);
    let r = state.deployment("crasher").unwrap().replica(0).unwrap().clone();
    assert!(r.last_error.as_deref().unwrap().contains("exit"));
    assert_eq!(r.restarts, 0);

    // First retry after 1s, second after a further 2s.
    let t0 = std::time::Instant::now();
    let (ok, _) = admin
        .wait_for(Duration::from_secs(5), |s| s.deployments[0].replicas[0].restarts >= 1)
        .await
        .unwrap();
    assert!(ok);
    let first = t0.elapsed();
    assert!(first >= Duration::from_millis(800), "{first:?}");
    let (ok, _) = admin
        .wait_for(Duration::from_secs(6), |s| s.deployments[0].replicas[0].restarts >= 2)
        .await
        .unwrap();
    assert!(ok);
    let second = t0.elapsed() - first;
    assert!(second >= Duration::from_millis(1800), "{second:?}");
    c.stop().await;
}

#[tokio::test]
async fn admin_rejections() {
    let root = tempfile::tempdir().unwrap();
    let (c, admin) = conductor(root.path()).await;

    let err = admin.apply("deployment x\n  replicas 1\n  bogus 1\nend\n").await.unwrap_err();
    assert_eq!(err.status(), 400);
    assert!(err.message.contains("line 3"), "{}", err.message);

    admin
        .apply("deployment auto\n  replicas 2\n  exec sleep 30\n  cpu_target 50\n  min_replicas 2\n  max_replicas 4\nend\n")
        .await
        .unwrap();
    assert_eq!(admin.scale("auto", 0).await.unwrap_err().status(), 400);
    assert_eq!(admin.scale("auto", 5).await.unwrap_err().status(), 400);
    assert_eq!(admin.scale("ghost", 1).await.unwrap_err().status(), 404);
    admin.scale("auto", 3).await.unwrap();
    let (ok, _) = admin
        .wait_for(Duration::from_secs(3), |s| {
            s.deployment("auto").is_some_and(|d| d.replicas.iter().filter(|r| r.pid.is_some()).count() == 3)
        })
        .await
        .unwrap();
    assert!(ok);
    admin.scale("auto", 2).await.unwrap();
    let (ok, _) = admin
        .wait_for(Duration::from_secs(3), |s| s.deployment("auto").is_some_and(|d| d.replicas.len() == 2))
        .await
        .unwrap();
    assert!(ok);

    // Starting replicas are not killable.
    assert_eq!(admin.kill("auto", 0).await.unwrap_err().status(), 404);
    assert_eq!(admin.kill("auto", 9).await.unwrap_err().status(), 404);

    let busy = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = busy.local_addr().unwrap().port();
    let err = admin
        .apply(&format!(
            "deployment auto\n  replicas 2\n  exec sleep 30\nend\nservice front\n  listen {port}\n  target auto\nend\n"
        ))
        .await
        .unwrap_err();
    assert_eq!(err.status(), 409);
    assert!(err.message.contains("front"), "{}", err.message);
    c.stop().await;
}

#[tokio::test]
async fn removed_deployments_are_stopped() {
    let root = tempfile::tempdir().unwrap();
    let (c, admin) = conductor(root.path()).await;
    admin
        .apply("deployment a\n  replicas 1\n  exec sleep 30\nend\ndeployment b\n  replicas 1\n  exec sleep 30\nend\n")
        .await
        .unwrap();
    let (_, state) = admin
        .wait_for(Duration::from_secs(3), |s| s.deployments.iter().all(|d| d.replicas.iter().all(|r| r.pid.is_some())))
        .await
        .unwrap();
    let pid_b = state.deployment("b").unwrap().replicas[0].pid.unwrap();
    admin.apply("deployment a\n  replicas 1\n  exec sleep 30\nend\n").await.unwrap();
    let (ok, _) = admin
        .wait_for(Duration::from_secs(3), |s| s.deployment("b").is_none())
        .await
        .unwrap();
    assert!(ok);
    let (ok, _) = admin
        .wait_for(Duration::from_secs(4), |_| !procfs::is_alive(pid_b))
        .await
        .unwrap();
    assert!(ok);
    c.stop().await;
}
