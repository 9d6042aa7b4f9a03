//! Reference orders service: cart, checkout, history and delivery status.
//!
//! Key layout in the datastore:
//! * `cartgen/<user>`: cart generation counter; its version is the generation.
//! * `cart/<user>/<gen>/<book>`: one [`CartItem`] per book in the live cart.
//! * `order/<user>/<order>`: the [`Order`] record.
//! * `orderref/<order>`: owning user id, for lookups by order id alone.
//!
//! Checkout claims the cart by bumping `cartgen/<user>` with compare-and-swap
//! after all reservations succeed. Of two concurrent checkouts of the same
//! cart exactly one wins the claim; the other compensates, retries, and finds
//! the new (empty) generation.

use std::future::Future;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::Response;
use axum::routing::{delete, get, post};
use axum::Router;
use bookstore_core::contracts::{is_valid_id, new_id};
use bookstore_core::{
    canonical_decode, canonical_encode, now_ms, ApiError, CartItem, Order, OrderLine, OrderStatus,
    Role,
};
use serde::Deserialize;
use serde_json::json;
use tower_http::cors::CorsLayer;

use crate::clients::{BooksClient, Identity, KvClient, KvError, UsersClient};
use crate::http::{bearer_token, json, parse_body, HttpResult};
use crate::telemetry::{instrument, Telemetry};

const CLAIM_ATTEMPTS: u32 = 5;

#[derive(Debug, Clone)]
pub struct Config {
    pub port: u16,
    pub datastore_url: String,
    pub users_url: String,
    pub books_url: String,
}

impl Config {
    /// `PORT`, `DATASTORE_URL`, `USERS_URL`, `BOOKS_URL`.
    pub fn from_env() -> Result<Self, String> {
        Ok(Self {
            port: crate::env_port()?,
            datastore_url: crate::env_var("DATASTORE_URL")?,
            users_url: crate::env_var("USERS_URL")?,
            books_url: crate::env_var("BOOKS_URL")?,
        })
    }
}

/// Stock operations checkout depends on.
pub trait Inventory: Sync {
    /// Current unit price of a book.
    fn price(&self, book_id: &str) -> impl Future<Output = Result<u64, ApiError>> + Send;
    fn reserve(&self, book_id: &str, quantity: u64) -> impl Future<Output = Result<(), ApiError>> + Send;
    fn release(&self, book_id: &str, quantity: u64) -> impl Future<Output = Result<(), ApiError>> + Send;
}

impl Inventory for BooksClient {
    async fn price(&self, book_id: &str) -> Result<u64, ApiError> {
        Ok(self.get(book_id).await?.price_cents)
    }

    async fn reserve(&self, book_id: &str, quantity: u64) -> Result<(), ApiError> {
        BooksClient::reserve(self, book_id, quantity).await.map(drop)
    }

    async fn release(&self, book_id: &str, quantity: u64) -> Result<(), ApiError> {
        BooksClient::release(self, book_id, quantity).await.map(drop)
    }
}

/// Gives back every reserved line, newest first.
pub async fn release_all<I: Inventory>(inventory: &I, lines: &[OrderLine]) {
    for line in lines.iter().rev() {
        if let Err(e) = inventory.release(&line.book_id, line.quantity).await {
            tracing::error!(book = %line.book_id, qty = line.quantity, error = %e, "compensation failed");
        }
    }
}

/// Prices and reserves each cart line in ascending book id order.
///
/// On the first failure every line reserved so far is released and the
/// failing error is returned, leaving stock as it was.
pub async fn reserve_all<I: Inventory>(inventory: &I, items: &[CartItem]) -> Result<Vec<OrderLine>, ApiError> {
    let mut sorted: Vec<&CartItem> = items.iter().collect();
    sorted.sort_by(|a, b| a.book_id.cmp(&b.book_id));
    let mut reserved = Vec::with_capacity(sorted.len());
    for item in sorted {
        let step = async {
            let price = inventory.price(&item.book_id).await?;
            inventory.reserve(&item.book_id, item.quantity).await?;
            Ok::<_, ApiError>(price)
        };
        match step.await {
            Ok(unit_price_cents) => reserved.push(OrderLine {
                book_id: item.book_id.clone(),
                quantity: item.quantity,
                unit_price_cents,
            }),
            Err(e) => {
                release_all(inventory, &reserved).await;
                return Err(e);
            }
        }
    }
    Ok(reserved)
}

#[derive(Clone)]
struct AppState {
    kv: KvClient,
    users: UsersClient,
    books: BooksClient,
}

impl AppState {
    async fn caller(&self, headers: &HeaderMap) -> Result<Identity, ApiError> {
        self.users.authorize(bearer_token(headers), Some(Role::Customer)).await
    }

    async fn generation(&self, user: &str) -> Result<u64, ApiError> {
        Ok(self.kv.get(&format!("cartgen/{user}")).await?.map_or(0, |(_, v)| v))
    }

    async fn cart(&self, user: &str, gen: u64) -> Result<Vec<(String, CartItem)>, ApiError> {
        self.kv
            .scan(&format!("cart/{user}/{gen}/"))
            .await?
            .into_iter()
            .map(|r| Ok((r.key, canonical_decode::<CartItem>(&r.value)?)))
            .collect()
    }
}

async fn get_cart(State(st): State<AppState>, headers: HeaderMap) -> HttpResult<Response> {
    let who = st.caller(&headers).await?;
    let gen = st.generation(&who.user_id).await?;
    let items: Vec<CartItem> = st.cart(&who.user_id, gen).await?.into_iter().map(|(_, i)| i).collect();
    Ok(json(StatusCode::OK, &items))
}

#[derive(Deserialize)]
struct AddItem {
    book_id: String,
    quantity: u64,
}

async fn add_item(State(st): State<AppState>, headers: HeaderMap, body: Bytes) -> HttpResult<Response> {
    let who = st.caller(&headers).await?;
    let req: AddItem = parse_body(&body)?;
    if req.quantity < 1 {
        return Err(ApiError::bad_request("quantity must be at least 1").into());
    }
    if !is_valid_id(&req.book_id) {
        return Err(ApiError::not_found(format!("no book {:?}", req.book_id)).into());
    }
    st.books.get(&req.book_id).await?;
    let item = CartItem {
        user_id: who.user_id.clone(),
        book_id: req.book_id,
        quantity: req.quantity,
    };
    let doc = canonical_encode(&item)?;
    let gen = st.generation(&who.user_id).await?;
    st.kv
        .put(&format!("cart/{}/{gen}/{}", who.user_id, item.book_id), &doc, None)
        .await
        .map_err(ApiError::from)?;
    Ok(json(StatusCode::OK, &item))
}

async fn remove_item(
    State(st): State<AppState>,
    Path(book_id): Path<String>,
    headers: HeaderMap,
) -> HttpResult<Response> {
    let who = st.caller(&headers).await?;
    let gen = st.generation(&who.user_id).await?;
    st.kv
        .delete(&format!("cart/{}/{gen}/{book_id}", who.user_id), None)
        .await
        .map_err(ApiError::from)?;
    Ok(json(StatusCode::OK, &json!({ "removed": true })))
}

async fn checkout(State(st): State<AppState>, headers: HeaderMap) -> HttpResult<Response> {
    let who = st.caller(&headers).await?;
    let user = who.user_id;
    for _ in 0..CLAIM_ATTEMPTS {
        let gen = st.generation(&user).await?;
        let cart = st.cart(&user, gen).await?;
        if cart.is_empty() {
            return Err(ApiError::bad_request("cart is empty").into());
        }
        let items: Vec<CartItem> = cart.iter().map(|(_, i)| i.clone()).collect();
        let lines = reserve_all(&st.books, &items).await?;
        match st.kv.put(&format!("cartgen/{user}"), "", Some(gen)).await {
            Ok(_) => {}
            Err(KvError::Conflict) => {
                release_all(&st.books, &lines).await;
                continue;
            }
            Err(KvError::Api(e)) => {
                release_all(&st.books, &lines).await;
                return Err(e.into());
            }
        }
        let order = Order {
            id: new_id(),
            user_id: user.clone(),
            total_cents: Order::line_sum_cents(&lines),
            lines,
            status: OrderStatus::Placed,
            created_at: now_ms(),
        };
        let stored = async {
            let doc = canonical_encode(&order)?;
            st.kv.put(&format!("orderref/{}", order.id), &user, Some(0)).await?;
            st.kv.put(&format!("order/{user}/{}", order.id), &doc, Some(0)).await?;
            Ok::<_, ApiError>(())
        };
        if let Err(e) = stored.await {
            release_all(&st.books, &order.lines).await;
            return Err(e.into());
        }
        for (key, _) in &cart {
            let _ = st.kv.delete(key, None).await;
        }
        return Ok(json(StatusCode::CREATED, &order));
    }
    Err(ApiError::conflict("cart kept changing during checkout").into())
}

#[derive(Deserialize)]
struct ListQuery {
    user_id: Option<String>,
}

async fn list_orders(
    State(st): State<AppState>,
    Query(q): Query<ListQuery>,
    headers: HeaderMap,
) -> HttpResult<Response> {
    let who = st.caller(&headers).await?;
    let user = match q.user_id {
        Some(other) if other != who.user_id => {
            if who.role != Role::Admin {
                return Err(ApiError::forbidden("only admins may view other users' orders").into());
            }
            other
        }
        _ => who.user_id,
    };
    let mut orders = st
        .kv
        .scan(&format!("order/{user}/"))
        .await?
        .into_iter()
        .map(|r| canonical_decode::<Order>(&r.value))
        .collect::<Result<Vec<_>, _>>()?;
    orders.sort_by(|a, b| b.created_at.cmp(&a.created_at).then_with(|| a.id.cmp(&b.id)));
    Ok(json(StatusCode::OK, &orders))
}

#[derive(Deserialize)]
struct StatusChange {
    status: OrderStatus,
}

async fn set_status(
    State(st): State<AppState>,
    Path(order_id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> HttpResult<Response> {
    st.users.authorize(bearer_token(&headers), Some(Role::Admin)).await?;
    let change: StatusChange = parse_body(&body)?;
    let missing = || ApiError::not_found(format!("no order {order_id:?}"));
    if !is_valid_id(&order_id) {
        return Err(missing().into());
    }
    let (user, _) = st.kv.get(&format!("orderref/{order_id}")).await?.ok_or_else(missing)?;
    let key = format!("order/{user}/{order_id}");
    let (doc, version) = st.kv.get(&key).await?.ok_or_else(missing)?;
    let mut order: Order = canonical_decode(&doc)?;
    if !order.status.can_transition_to(change.status) {
        return Err(ApiError::conflict(format!(
            "cannot move order from {} to {}",
            order.status.as_str(),
            change.status.as_str()
        ))
        .into());
    }
    order.status = change.status;
    st.kv
        .put(&key, &canonical_encode(&order)?, Some(version))
        .await
        .map_err(ApiError::from)?;
    Ok(json(StatusCode::OK, &order))
}

pub fn router(config: &Config) -> Router {
    let state = AppState {
        kv: KvClient::new(&config.datastore_url),
        users: UsersClient::new(&config.users_url),
        books: BooksClient::new(&config.books_url),
    };
    let app = Router::new()
        .route("/cart", get(get_cart))
        .route("/cart/items", post(add_item))
        .route("/cart/items/{book_id}", delete(remove_item))
        .route("/orders", get(list_orders).post(checkout))
        .route("/orders/{order_id}", axum::routing::patch(set_status))
        .with_state(state)
        .layer(CorsLayer::permissive());
    instrument(app, Arc::new(Telemetry::new()))
}

pub async fn run(config: Config) -> Result<(), String> {
    crate::serve(router(&config), config.port)
        .await
        .map_err(|e| format!("serve on port {}: {e}", config.port))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;
    use std::sync::Mutex;

    use super::*;

    /// In-memory stock that fails the n-th reserve call.
    struct Shelf {
        stock: Mutex<BTreeMap<String, (u64, u64)>>,
        fail_at: Option<usize>,
        calls: Mutex<usize>,
    }

    impl Shelf {
        fn new(books: &[(&str, u64, u64)], fail_at: Option<usize>) -> Self {
            Self {
                stock: Mutex::new(books.iter().map(|(id, p, q)| (id.to_string(), (*p, *q))).collect()),
                fail_at,
                calls: Mutex::new(0),
            }
        }

        fn total(&self) -> u64 {
            self.stock.lock().unwrap().values().map(|(_, q)| q).sum()
        }
    }

    impl Inventory for Shelf {
        async fn price(&self, id: &str) -> Result<u64, ApiError> {
            self.stock.lock().unwrap().get(id).map(|(p, _)| *p).ok_or_else(|| ApiError::not_found(id))
        }

        async fn reserve(&self, id: &str, qty: u64) -> Result<(), ApiError> {
            let mut calls = self.calls.lock().unwrap();
            *calls += 1;
            if Some(*calls) == self.fail_at {
                return Err(ApiError::unavailable("injected"));
            }
            let mut stock = self.stock.lock().unwrap();
            let entry = stock.get_mut(id).ok_or_else(|| ApiError::not_found(id))?;
            if entry.1 < qty {
                return Err(ApiError::insufficient_stock(id));
            }
            entry.1 -= qty;
            Ok(())
        }

        async fn release(&self, id: &str, qty: u64) -> Result<(), ApiError> {
            self.stock.lock().unwrap().get_mut(id).unwrap().1 += qty;
            Ok(())
        }
    }

    fn item(book: &str, qty: u64) -> CartItem {
        CartItem {
            user_id: "u".repeat(32),
            book_id: book.to_string(),
            quantity: qty,
        }
    }

    const A: &str = "aaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa";
    const B: &str = "bbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbb";
    const C: &str = "cccccccccccccccccccccccccccccccc";

    #[tokio::test]
    async fn lines_follow_book_id_order_and_capture_price() {
        let shelf = Shelf::new(&[(A, 1099, 5), (B, 550, 5)], None);
        let lines = reserve_all(&shelf, &[item(B, 1), item(A, 2)]).await.unwrap();
        assert_eq!(lines[0].book_id, A);
        assert_eq!(lines[1].book_id, B);
        assert_eq!(Order::line_sum_cents(&lines), 2 * 1099 + 550);
        assert_eq!(shelf.total(), 7);
    }

    #[tokio::test]
    async fn every_failure_point_restores_stock() {
        let cart = [item(C, 3), item(A, 1), item(B, 2)];
        for k in 1..=cart.len() {
            let shelf = Shelf::new(&[(A, 100, 4), (B, 200, 4), (C, 300, 4)], Some(k));
            let before = shelf.total();
            let err = reserve_all(&shelf, &cart).await.unwrap_err();
            assert_eq!(err.message, "injected");
            assert_eq!(shelf.total(), before, "failure at step {k}");
        }
    }

    #[tokio::test]
    async fn shortage_on_second_line_releases_first() {
        let shelf = Shelf::new(&[(A, 100, 4), (B, 200, 1)], None);
        let err = reserve_all(&shelf, &[item(A, 2), item(B, 2)]).await.unwrap_err();
        assert_eq!(err.status(), 409);
        assert_eq!(shelf.stock.lock().unwrap()[A].1, 4);
    }
}
