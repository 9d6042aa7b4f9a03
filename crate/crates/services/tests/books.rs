mod common;

use std::sync::Arc;

use reqwest::{Method, StatusCode};
use serde_json::json;

#[tokio::test]
async fn catalog_crud_and_admin_gate() {
    let env = common::start().await;
    let admin = env.user("admin", "admin").await;
    let customer = env.user("carol", "customer").await;

    let draft = json!({ "title": "Dune", "author": "F. Herbert", "price_cents": 1099, "quantity": 3 });
    let url = format!("{}/books", env.stack.books);
    assert_eq!(env.call(Method::POST, url.clone(), None, Some(draft.clone())).await.0, StatusCode::UNAUTHORIZED);
    assert_eq!(
        env.call(Method::POST, url.clone(), Some(&customer), Some(draft.clone())).await.0,
        StatusCode::FORBIDDEN
    );
    let (s, book) = env.call(Method::POST, url.clone(), Some(&admin), Some(draft)).await;
    assert_eq!(s, StatusCode::CREATED);
    let id = book["id"].as_str().unwrap();
    assert_eq!(id.len(), 32);

    let (s, list) = env.call(Method::GET, url.clone(), None, None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(list, json!([book]));

    let update = json!({ "title": "Dune", "author": "Frank Herbert", "price_cents": 1299, "quantity": 7 });
    let (s, updated) = env
        .call(Method::PUT, format!("{url}/{id}"), Some(&admin), Some(update))
        .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(updated["id"], book["id"]);
    assert_eq!(updated["price_cents"], 1299);

    let bad = json!({ "title": "", "author": "x", "price_cents": 1, "quantity": 1 });
    assert_eq!(env.call(Method::POST, url.clone(), Some(&admin), Some(bad)).await.0, StatusCode::BAD_REQUEST);
    let missing = format!("{url}/{}", "0".repeat(32));
    assert_eq!(env.call(Method::GET, missing, None, None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(env.call(Method::GET, format!("{url}/nope"), None, None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn reserve_and_release_are_inverse() {
    let env = common::start().await;
    let admin = env.user("admin", "admin").await;
    let id = env.add_book(&admin, "Emma", 500, 4).await;
    let op = |op: &str, q: u64| {
        env.call(
            Method::POST,
            format!("{}/books/{id}/{op}", env.stack.books),
            None,
            Some(json!({ "quantity": q })),
        )
    };
    let (s, body) = op("reserve", 3).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["remaining"], 1);
    let (s, err) = op("reserve", 2).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(err["code"], "insufficient_stock");
    assert_eq!(env.stock(&id).await, 1);
    let (s, body) = op("release", 3).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["quantity"], 4);
    assert_eq!(op("reserve", 0).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn concurrent_reservations_never_oversell() {
    let env = Arc::new(common::start().await);
    let admin = env.user("admin", "admin").await;
    for round in 0..5 {
        let id = env.add_book(&admin, &format!("Stock {round}"), 100, 30).await;
        let mut tasks = tokio::task::JoinSet::new();
        for _ in 0..50 {
            let env = env.clone();
            let url = format!("{}/books/{id}/reserve", env.stack.books);
            tasks.spawn(async move {
                env.call(Method::POST, url, None, Some(json!({ "quantity": 1 }))).await
            });
        }
        let mut ok = 0;
        let mut remaining = Vec::new();
        while let Some(r) = tasks.join_next().await {
            let (s, body) = r.unwrap();
            match s {
                StatusCode::OK => {
                    ok += 1;
                    remaining.push(body["remaining"].as_u64().unwrap());
                }
                StatusCode::CONFLICT => {}
                other => panic!("unexpected {other}: {body}"),
            }
        }
        assert_eq!(ok, 30, "round {round}");
        assert_eq!(env.stock(&id).await, 0);
        remaining.sort_unstable();
        assert_eq!(remaining, (0..30).collect::<Vec<_>>(), "each success observed a distinct stock level");
    }
}
