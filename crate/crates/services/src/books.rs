//! Catalog and inventory.
//!
//! Each book lives under `book/<id>` as one whole-entity record. Every
//! mutation is a read followed by a compare-and-swap write, retried a bounded
//! number of times, so concurrent reservations can never oversell.

use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::Response;
use axum::routing::{get, post};
use axum::Router;
use bookstore_core::contracts::{is_valid_id, new_id};
use bookstore_core::{canonical_decode, canonical_encode, ApiError, Book, BookDraft, Role};
use rand::Rng;
use serde::Deserialize;
use serde_json::json;
use tower_http::cors::CorsLayer;

use crate::clients::{KvClient, KvError, UsersClient};
use crate::http::{bearer_token, json, parse_body, HttpResult};
use crate::telemetry::{instrument, Telemetry};

pub const CAS_ATTEMPTS: u32 = 10;
const BACKOFF_BASE_MS: u64 = 5;
const BACKOFF_CAP_MS: u64 = 160;

#[derive(Debug, Clone)]
pub struct Config {
    pub port: u16,
    pub datastore_url: String,
    pub users_url: String,
}

impl Config {
    /// `PORT`, `DATASTORE_URL`, `USERS_URL`.
    pub fn from_env() -> Result<Self, String> {
        Ok(Self {
            port: crate::env_port()?,
            datastore_url: crate::env_var("DATASTORE_URL")?,
            users_url: crate::env_var("USERS_URL")?,
        })
    }
}

#[derive(Clone)]
struct AppState {
    kv: KvClient,
    users: UsersClient,
}

fn book_key(id: &str) -> String {
    format!("book/{id}")
}

/// Full-jitter exponential backoff starting at 5ms.
async fn backoff(attempt: u32) {
    let ceiling = (BACKOFF_BASE_MS << attempt.min(8)).min(BACKOFF_CAP_MS);
    let ms = rand::rng().random_range(1..=ceiling);
    tokio::time::sleep(Duration::from_millis(ms)).await;
}

async fn load(kv: &KvClient, id: &str) -> Result<(Book, u64), ApiError> {
    if !is_valid_id(id) {
        return Err(ApiError::not_found(format!("no book {id:?}")));
    }
    let (doc, version) = kv
        .get(&book_key(id))
        .await?
        .ok_or_else(|| ApiError::not_found(format!("no book {id:?}")))?;
    Ok((canonical_decode(&doc)?, version))
}

/// Read-modify-write of one book under compare-and-swap with bounded retry.
async fn modify<F>(kv: &KvClient, id: &str, mut f: F) -> Result<Book, ApiError>
where
    F: FnMut(Book) -> Result<Book, ApiError>,
{
    for attempt in 0..CAS_ATTEMPTS {
        let (book, version) = load(kv, id).await?;
        let updated = f(book)?;
        let doc = canonical_encode(&updated)?;
        match kv.put(&book_key(id), &doc, Some(version)).await {
            Ok(_) => return Ok(updated),
            Err(KvError::Conflict) => {
                if attempt + 1 < CAS_ATTEMPTS {
                    backoff(attempt).await;
                }
            }
            Err(KvError::Api(e)) => return Err(e),
        }
    }
    Err(ApiError::conflict(format!(
        "book {id} kept changing; gave up after {CAS_ATTEMPTS} attempts"
    )))
}

async fn list_books(State(st): State<AppState>) -> HttpResult<Response> {
    let mut books = st
        .kv
        .scan("book/")
        .await?
        .into_iter()
        .map(|r| canonical_decode::<Book>(&r.value))
        .collect::<Result<Vec<_>, _>>()?;
    books.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(json(StatusCode::OK, &books))
}

async fn get_book(State(st): State<AppState>, Path(id): Path<String>) -> HttpResult<Response> {
    let (book, _) = load(&st.kv, &id).await?;
    Ok(json(StatusCode::OK, &book))
}

async fn create_book(State(st): State<AppState>, headers: HeaderMap, body: Bytes) -> HttpResult<Response> {
    st.users.authorize(bearer_token(&headers), Some(Role::Admin)).await?;
    let draft: BookDraft = parse_body(&body)?;
    draft.validate()?;
    let book = draft.into_book(new_id());
    let doc = canonical_encode(&book)?;
    st.kv
        .put(&book_key(&book.id), &doc, Some(0))
        .await
        .map_err(ApiError::from)?;
    Ok(json(StatusCode::CREATED, &book))
}

async fn update_book(
    State(st): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> HttpResult<Response> {
    st.users.authorize(bearer_token(&headers), Some(Role::Admin)).await?;
    let draft: BookDraft = parse_body(&body)?;
    draft.validate()?;
    let book = modify(&st.kv, &id, |current| Ok(draft.clone().into_book(current.id))).await?;
    Ok(json(StatusCode::OK, &book))
}

#[derive(Deserialize)]
struct QuantityBody {
    quantity: u64,
}

fn quantity(body: &[u8]) -> Result<u64, ApiError> {
    let q: QuantityBody = parse_body(body)?;
    if q.quantity < 1 {
        return Err(ApiError::bad_request("quantity must be at least 1"));
    }
    Ok(q.quantity)
}

async fn reserve(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> HttpResult<Response> {
    let qty = quantity(&body)?;
    let book = modify(&st.kv, &id, |mut book| {
        if book.quantity < qty {
            return Err(ApiError::insufficient_stock(format!(
                "{:?} has {} in stock, {qty} requested",
                book.title, book.quantity
            )));
        }
        book.quantity -= qty;
        Ok(book)
    })
    .await?;
    Ok(json(StatusCode::OK, &json!({ "book_id": book.id, "remaining": book.quantity })))
}

async fn release(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> HttpResult<Response> {
    let qty = quantity(&body)?;
    let book = modify(&st.kv, &id, |mut book| {
        book.quantity = book
            .quantity
            .checked_add(qty)
            .ok_or_else(|| ApiError::bad_request("quantity overflow"))?;
        Ok(book)
    })
    .await?;
    Ok(json(StatusCode::OK, &json!({ "book_id": book.id, "quantity": book.quantity })))
}

pub fn router(config: &Config) -> Router {
    let state = AppState {
        kv: KvClient::new(&config.datastore_url),
        users: UsersClient::new(&config.users_url),
    };
    let app = Router::new()
        .route("/books", get(list_books).post(create_book))
        .route("/books/{id}", get(get_book).put(update_book))
        .route("/books/{id}/reserve", post(reserve))
        .route("/books/{id}/release", post(release))
        .with_state(state)
        .layer(CorsLayer::permissive());
    instrument(app, Arc::new(Telemetry::new()))
}

pub async fn run(config: Config) -> Result<(), String> {
    crate::serve(router(&config), config.port)
        .await
        .map_err(|e| format!("serve on port {}: {e}", config.port))
}
