use std::sync::Arc;

use bookstore_core::{contracts::metrics, FlushPolicy, Store};
use bookstore_services::{datastore, spawn_local};
use reqwest::{Client, StatusCode};
use serde_json::Value;

async fn serve(dir: &std::path::Path) -> (String, tokio::task::JoinHandle<()>) {
    let store = Arc::new(Store::open_with(dir, FlushPolicy::EveryWrite).unwrap());
    let (addr, h) = spawn_local(datastore::router(store)).await.unwrap();
    (format!("http://{addr}"), h)
}

#[tokio::test]
async fn versions_etags_and_conditional_writes() {
    let dir = tempfile::tempdir().unwrap();
    let (base, _h) = serve(dir.path()).await;
    let c = Client::new();
    let put = |key: &str, body: &str, if_match: Option<u64>| {
        let mut req = c.put(format!("{base}/kv/{key}")).body(body.to_string());
        if let Some(v) = if_match {
            req = req.header("if-match", v.to_string());
        }
        req.send()
    };

    let r = put("book/1", "first", Some(0)).await.unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    assert_eq!(r.json::<Value>().await.unwrap()["version"], 1);
    let r = put("book/1", "stale", Some(0)).await.unwrap();
    assert_eq!(r.status(), StatusCode::CONFLICT);
    assert_eq!(r.json::<Value>().await.unwrap()["code"], "conflict");
    assert_eq!(put("book/1", "second", Some(1)).await.unwrap().status(), StatusCode::OK);
    assert_eq!(put("book/2", "other", None).await.unwrap().status(), StatusCode::OK);

    let r = c.get(format!("{base}/kv/book/1")).send().await.unwrap();
    assert_eq!(r.headers()["etag"], "2");
    assert_eq!(r.text().await.unwrap(), "second");

    let scan: Value = c
        .get(format!("{base}/kv?prefix=book/"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(scan.as_array().unwrap().len(), 2);
    assert_eq!(scan[0]["key"], "book/1");
    assert_eq!(scan[0]["version"], 2);

    let del = c.delete(format!("{base}/kv/book/1")).header("if-match", "1").send().await.unwrap();
    assert_eq!(del.status(), StatusCode::CONFLICT);
    let del = c.delete(format!("{base}/kv/book/1")).header("if-match", "2").send().await.unwrap();
    assert_eq!(del.status(), StatusCode::OK);
    let gone = c.get(format!("{base}/kv/book/1")).send().await.unwrap();
    assert_eq!(gone.status(), StatusCode::NOT_FOUND);
    let bad = c.put(format!("{base}/kv/x")).header("if-match", "abc").body("v").send().await.unwrap();
    assert_eq!(bad.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn restart_replays_and_compaction_preserves_state() {
    let dir = tempfile::tempdir().unwrap();
    let c = Client::new();
    {
        let (base, h) = serve(dir.path()).await;
        for i in 0..20 {
            c.put(format!("{base}/kv/k/{}", i % 5)).body(format!("v{i}")).send().await.unwrap();
        }
        let r = c.post(format!("{base}/compact")).send().await.unwrap();
        assert_eq!(r.status(), StatusCode::OK);
        let text = c.get(format!("{base}/metrics")).send().await.unwrap().text().await.unwrap();
        assert_eq!(metrics::lookup(&text, "datastore_keys"), Some(5.0));
        assert_eq!(metrics::lookup(&text, "datastore_wal_entries"), Some(5.0));
        h.abort();
        let _ = h.await;
    }
    let (base, _h) = serve(dir.path()).await;
    let r = c.get(format!("{base}/kv/k/4")).send().await.unwrap();
    assert_eq!(r.headers()["etag"], "4");
    assert_eq!(r.text().await.unwrap(), "v19");
}

#[tokio::test]
async fn health_and_request_counter() {
    let dir = tempfile::tempdir().unwrap();
    let (base, _h) = serve(dir.path()).await;
    let c = Client::new();
    let r = c.get(format!("{base}/health")).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    assert_eq!(r.json::<Value>().await.unwrap()["status"], "ok");
    for _ in 0..3 {
        c.get(format!("{base}/kv/missing")).send().await.unwrap();
    }
    let text = c.get(format!("{base}/metrics")).send().await.unwrap().text().await.unwrap();
    let parsed = metrics::parse(&text).unwrap();
    assert!(parsed.iter().any(|(k, v)| k == "up" && *v == 1.0));
    assert!(metrics::lookup(&text, "http_requests_total").unwrap() >= 3.0);
}
