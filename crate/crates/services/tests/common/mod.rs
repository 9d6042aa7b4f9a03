#![allow(dead_code)]

use bookstore_services::local::LocalStack;
use reqwest::{Client, StatusCode};
use serde_json::{json, Value};
use tempfile::TempDir;

pub struct Env {
    pub stack: LocalStack,
    pub http: Client,
    _dir: TempDir,
}

pub async fn start() -> Env {
    let dir = tempfile::tempdir().unwrap();
    let stack = LocalStack::start(dir.path()).await.unwrap();
    Env {
        stack,
        http: Client::new(),
        _dir: dir,
    }
}

impl Env {
    pub async fn call(&self, method: reqwest::Method, url: String, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
        let mut req = self.http.request(method, url);
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        if let Some(b) = body {
            req = req.json(&b);
        }
        let resp = req.send().await.unwrap();
        let status = resp.status();
        let text = resp.text().await.unwrap();
        (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
    }

    pub async fn register(&self, name: &str, role: &str) -> (StatusCode, Value) {
        self.call(
            reqwest::Method::POST,
            format!("{}/users", self.stack.users),
            None,
            Some(json!({ "username": name, "password": "correct horse", "role": role })),
        )
        .await
    }

    pub async fn login(&self, name: &str, password: &str) -> (StatusCode, Value) {
        self.call(
            reqwest::Method::POST,
            format!("{}/login", self.stack.users),
            None,
            Some(json!({ "username": name, "password": password })),
        )
        .await
    }

    /// Registers and logs in, returning the bearer token.
    pub async fn user(&self, name: &str, role: &str) -> String {
        let (s, _) = self.register(name, role).await;
        assert_eq!(s, StatusCode::CREATED);
        let (s, body) = self.login(name, "correct horse").await;
        assert_eq!(s, StatusCode::OK);
        body["token"].as_str().unwrap().to_string()
    }

    pub async fn add_book(&self, admin: &str, title: &str, price: u64, qty: u64) -> String {
        let (s, body) = self
            .call(
                reqwest::Method::POST,
                format!("{}/books", self.stack.books),
                Some(admin),
                Some(json!({ "title": title, "author": "A. Writer", "price_cents": price, "quantity": qty })),
            )
            .await;
        assert_eq!(s, StatusCode::CREATED, "{body}");
        body["id"].as_str().unwrap().to_string()
    }

    pub async fn stock(&self, id: &str) -> u64 {
        let (s, body) = self
            .call(reqwest::Method::GET, format!("{}/books/{id}", self.stack.books), None, None)
            .await;
        assert_eq!(s, StatusCode::OK);
        body["quantity"].as_u64().unwrap()
    }

    pub async fn stock_sum(&self, ids: &[String]) -> u64 {
        let mut sum = 0;
        for id in ids {
            sum += self.stock(id).await;
        }
        sum
    }
}
