//! HTTP clients services use to reach each other.

use std::time::Duration;

use bookstore_core::{ApiError, Book, Record, Role};
use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use reqwest::{Client, StatusCode};
use serde::{Deserialize, Serialize};

use crate::http::decode_envelope;

const KEY_SEGMENT: &AsciiSet = &NON_ALPHANUMERIC
    .remove(b'/')
    .remove(b'-')
    .remove(b'_')
    .remove(b'.')
    .remove(b'~');

pub fn http_client() -> Client {
    Client::builder()
        .timeout(Duration::from_secs(10))
        .pool_idle_timeout(Duration::from_secs(30))
        .build()
        .expect("http client builds")
}

fn unreachable(service: &str, e: reqwest::Error) -> ApiError {
    ApiError::unavailable(format!("{service} unreachable: {e}"))
}

async fn error_from(service: &str, resp: reqwest::Response) -> ApiError {
    let status = resp.status().as_u16();
    match resp.text().await {
        Ok(body) => decode_envelope(status, &body),
        Err(e) => unreachable(service, e),
    }
}

/// Result of a conditional datastore write.
#[derive(Debug)]
pub enum KvError {
    Conflict,
    Api(ApiError),
}

impl From<KvError> for ApiError {
    fn from(e: KvError) -> Self {
        match e {
            KvError::Conflict => ApiError::conflict("concurrent modification"),
            KvError::Api(e) => e,
        }
    }
}

#[derive(Clone)]
pub struct KvClient {
    base: String,
    http: Client,
}

impl KvClient {
    pub fn new(base: impl Into<String>) -> Self {
        Self::with_client(base, http_client())
    }

    pub fn with_client(base: impl Into<String>, http: Client) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http,
        }
    }

    fn url(&self, key: &str) -> String {
        format!("{}/kv/{}", self.base, utf8_percent_encode(key, KEY_SEGMENT))
    }

    pub async fn get(&self, key: &str) -> Result<Option<(String, u64)>, ApiError> {
        let resp = self
            .http
            .get(self.url(key))
            .send()
            .await
            .map_err(|e| unreachable("datastore", e))?;
        match resp.status() {
            StatusCode::OK => {
                let version = resp
                    .headers()
                    .get("etag")
                    .and_then(|v| v.to_str().ok())
                    .and_then(|v| v.trim_matches('"').parse().ok())
                    .ok_or_else(|| ApiError::internal("datastore response lacks ETag"))?;
                let value = resp.text().await.map_err(|e| unreachable("datastore", e))?;
                Ok(Some((value, version)))
            }
            StatusCode::NOT_FOUND => Ok(None),
            _ => Err(error_from("datastore", resp).await),
        }
    }

    pub async fn put(&self, key: &str, value: &str, expected: Option<u64>) -> Result<u64, KvError> {
        let mut req = self.http.put(self.url(key)).body(value.to_string());
        if let Some(v) = expected {
            req = req.header("if-match", v.to_string());
        }
        let resp = req
            .send()
            .await
            .map_err(|e| KvError::Api(unreachable("datastore", e)))?;
        match resp.status() {
            StatusCode::OK => {
                #[derive(Deserialize)]
                struct Put {
                    version: u64,
                }
                let body: Put = resp
                    .json()
                    .await
                    .map_err(|e| KvError::Api(ApiError::internal(e.to_string())))?;
                Ok(body.version)
            }
            StatusCode::CONFLICT => Err(KvError::Conflict),
            _ => Err(KvError::Api(error_from("datastore", resp).await)),
        }
    }

    pub async fn delete(&self, key: &str, expected: Option<u64>) -> Result<(), KvError> {
        let mut req = self.http.delete(self.url(key));
        if let Some(v) = expected {
            req = req.header("if-match", v.to_string());
        }
        let resp = req
            .send()
            .await
            .map_err(|e| KvError::Api(unreachable("datastore", e)))?;
        match resp.status() {
            StatusCode::OK => Ok(()),
            StatusCode::CONFLICT => Err(KvError::Conflict),
            _ => Err(KvError::Api(error_from("datastore", resp).await)),
        }
    }

    pub async fn scan(&self, prefix: &str) -> Result<Vec<Record>, ApiError> {
        let resp = self
            .http
            .get(format!("{}/kv", self.base))
            .query(&[("prefix", prefix)])
            .send()
            .await
            .map_err(|e| unreachable("datastore", e))?;
        if !resp.status().is_success() {
            return Err(error_from("datastore", resp).await);
        }
        resp.json().await.map_err(|e| ApiError::internal(e.to_string()))
    }
}

/// Identity returned by the users service's `/authorize`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Identity {
    pub user_id: String,
    pub role: Role,
}

#[derive(Clone)]
pub struct UsersClient {
    base: String,
    http: Client,
}

impl UsersClient {
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: http_client(),
        }
    }

    /// Resolves a bearer token, requiring `role` when given.
    pub async fn authorize(&self, token: Option<&str>, role: Option<Role>) -> Result<Identity, ApiError> {
        let token = token.ok_or_else(|| ApiError::unauthorized("missing bearer token"))?;
        let mut req = self
            .http
            .get(format!("{}/authorize", self.base))
            .bearer_auth(token);
        if let Some(role) = role {
            req = req.query(&[("role", role.as_str())]);
        }
        let resp = req.send().await.map_err(|e| unreachable("users", e))?;
        if resp.status() != StatusCode::OK {
            return Err(error_from("users", resp).await);
        }
        resp.json().await.map_err(|e| ApiError::internal(e.to_string()))
    }
}

#[derive(Clone)]
pub struct BooksClient {
    base: String,
    http: Client,
}

#[derive(Serialize)]
struct QuantityBody {
    quantity: u64,
}

impl BooksClient {
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: http_client(),
        }
    }

    pub async fn get(&self, id: &str) -> Result<Book, ApiError> {
        let resp = self
            .http
            .get(format!("{}/books/{id}", self.base))
            .send()
            .await
            .map_err(|e| unreachable("books", e))?;
        if resp.status() != StatusCode::OK {
            return Err(error_from("books", resp).await);
        }
        resp.json().await.map_err(|e| ApiError::internal(e.to_string()))
    }

    async fn adjust(&self, id: &str, op: &str, quantity: u64, field: &str) -> Result<u64, ApiError> {
        let resp = self
            .http
            .post(format!("{}/books/{id}/{op}", self.base))
            .json(&QuantityBody { quantity })
            .send()
            .await
            .map_err(|e| unreachable("books", e))?;
        if resp.status() != StatusCode::OK {
            return Err(error_from("books", resp).await);
        }
        let body: serde_json::Value = resp.json().await.map_err(|e| ApiError::internal(e.to_string()))?;
        body[field]
            .as_u64()
            .ok_or_else(|| ApiError::internal(format!("books {op} response lacks {field}")))
    }

    /// Returns the remaining stock.
    pub async fn reserve(&self, id: &str, quantity: u64) -> Result<u64, ApiError> {
        self.adjust(id, "reserve", quantity, "remaining").await
    }

    /// Returns the new stock.
    pub async fn release(&self, id: &str, quantity: u64) -> Result<u64, ApiError> {
        self.adjust(id, "release", quantity, "quantity").await
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_keep_slashes_and_escape_the_rest() {
        let c = KvClient::new("http://h:1/");
        assert_eq!(c.url("book/abc"), "http://h:1/kv/book/abc");
        assert_eq!(c.url("username/a b?c"), "http://h:1/kv/username/a%20b%3Fc");
    }
}
