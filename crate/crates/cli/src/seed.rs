//! `seed`: users plus a catalog, idempotent by book title.

use std::collections::HashMap;
use std::path::Path;

use bookstore_conductor::AdminClient;
use bookstore_core::{ApiError, Book, BookDraft};
use bookstore_services::http::decode_envelope;
use reqwest::{Client, Method, StatusCode};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use crate::{cluster_state, runtime, service_url, usage, CmdResult, Failure};

pub const DEFAULT_ADMIN: &str = "admin:bookstore-admin";
pub const DEFAULT_DEMO: &str = "demo:bookstore-demo";

pub fn credentials(pair: &str) -> Result<(String, String), Failure> {
    match pair.split_once(':') {
        Some((u, p)) if !u.is_empty() && !p.is_empty() => Ok((u.to_string(), p.to_string())),
        _ => Err(usage(format!("credentials must be user:password, got {pair:?}"))),
    }
}

pub struct Api {
    http: Client,
}

impl Api {
    pub fn new() -> Self {
        Self { http: Client::new() }
    }

    pub async fn call<T: DeserializeOwned>(
        &self,
        method: Method,
        url: &str,
        token: Option<&str>,
        body: Option<Value>,
    ) -> Result<T, ApiError> {
        let mut req = self.http.request(method, url);
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        if let Some(b) = body {
            req = req.json(&b);
        }
        let resp = req
            .send()
            .await
            .map_err(|e| ApiError::unavailable(format!("{url}: {e}")))?;
        let status = resp.status();
        let text = resp
            .text()
            .await
            .map_err(|e| ApiError::unavailable(format!("{url}: {e}")))?;
        if !status.is_success() {
            return Err(decode_envelope(status.as_u16(), &text));
        }
        serde_json::from_str(&text).map_err(|e| ApiError::internal(format!("{url}: {e}")))
    }

    /// Registers `user` unless the name is taken.
    pub async fn ensure_user(&self, users: &str, user: &str, password: &str, role: &str) -> Result<(), ApiError> {
        let body = json!({ "username": user, "password": password, "role": role });
        match self.call::<Value>(Method::POST, &format!("{users}/users"), None, Some(body)).await {
            Ok(_) => Ok(()),
            Err(e) if e.status() == StatusCode::CONFLICT.as_u16() => Ok(()),
            Err(e) => Err(e),
        }
    }

    pub async fn login(&self, users: &str, user: &str, password: &str) -> Result<String, ApiError> {
        let body = json!({ "username": user, "password": password });
        let session: Value = self.call(Method::POST, &format!("{users}/login"), None, Some(body)).await?;
        session["token"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ApiError::internal("login reply has no token"))
    }
}

pub async fn seed(admin: &AdminClient, catalog: &Path, admin_creds: &str) -> CmdResult {
    let (admin_user, admin_pass) = credentials(admin_creds)?;
    let (demo_user, demo_pass) = credentials(DEFAULT_DEMO)?;
    let mut reader = csv::Reader::from_path(catalog).map_err(|e| usage(format!("{}: {e}", catalog.display())))?;

    let state = cluster_state(admin).await?;
    let users = service_url(&state, "users")?;
    let books = service_url(&state, "books")?;
    let api = Api::new();
    let fail = |e: ApiError| runtime(e.message);
    api.ensure_user(&users, &admin_user, &admin_pass, "admin").await.map_err(fail)?;
    api.ensure_user(&users, &demo_user, &demo_pass, "customer").await.map_err(fail)?;
    let token = api
        .login(&users, &admin_user, &admin_pass)
        .await
        .map_err(|e| runtime(format!("admin login as {admin_user}: {}", e.message)))?;

    let existing: Vec<Book> = api
        .call(Method::GET, &format!("{books}/books"), None, None)
        .await
        .map_err(fail)?;
    let mut by_title: HashMap<String, String> = existing.into_iter().map(|b| (b.title, b.id)).collect();

    let (mut created, mut updated, mut errors) = (0, 0, Vec::new());
    let headers = reader
        .headers()
        .map_err(|e| usage(format!("{}: {e}", catalog.display())))?
        .clone();
    for row in reader.records() {
        let record = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                errors.push(format!("row {line}: {e}"));
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line());
        let draft: BookDraft = match record.deserialize(Some(&headers)) {
            Ok(d) => d,
            Err(e) => {
                errors.push(format!("row {line}: {e}"));
                continue;
            }
        };
        if let Err(e) = draft.validate() {
            errors.push(format!("row {line}: {}", e.message));
            continue;
        }
        let body = serde_json::to_value(&draft).map_err(|e| runtime(e.to_string()))?;
        let result = match by_title.get(&draft.title) {
            Some(id) => api
                .call::<Book>(Method::PUT, &format!("{books}/books/{id}"), Some(&token), Some(body))
                .await
                .map(|_| updated += 1),
            None => api
                .call::<Book>(Method::POST, &format!("{books}/books"), Some(&token), Some(body))
                .await
                .map(|b| {
                    created += 1;
                    by_title.insert(b.title, b.id);
                }),
        };
        if let Err(e) = result {
            errors.push(format!("row {line}: {}", e.message));
        }
    }
    println!("books: {created} created, {updated} updated; users: {admin_user} (admin), {demo_user} (customer)");
    if errors.is_empty() {
        Ok(())
    } else {
        Err(usage(format!("{} row(s) rejected:\n{}", errors.len(), errors.join("\n"))))
    }
}
