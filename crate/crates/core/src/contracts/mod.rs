//! Wire schemas shared by every bookstore service.
//!
//! Entities are exchanged as JSON objects whose field names match the struct
//! fields exactly. Money is always integer cents. Every entity implements
//! [`Entity`], which carries its invariant check; [`canonical_encode`] refuses
//! to render an entity that violates its invariants and [`canonical_decode`]
//! rejects text that parses but describes an invalid entity.

pub mod ids;
pub mod metrics;

use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use ids::{is_valid_id, is_valid_token, new_id, new_token};

/// Error codes of the shared error envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    Unauthorized,
    Forbidden,
    NotFound,
    Conflict,
    InsufficientStock,
    Unavailable,
    Internal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 8] = [
        ErrorCode::BadRequest,
        ErrorCode::Unauthorized,
        ErrorCode::Forbidden,
        ErrorCode::NotFound,
        ErrorCode::Conflict,
        ErrorCode::InsufficientStock,
        ErrorCode::Unavailable,
        ErrorCode::Internal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::BadRequest => "bad_request",
            ErrorCode::Unauthorized => "unauthorized",
            ErrorCode::Forbidden => "forbidden",
            ErrorCode::NotFound => "not_found",
            ErrorCode::Conflict => "conflict",
            ErrorCode::InsufficientStock => "insufficient_stock",
            ErrorCode::Unavailable => "unavailable",
            ErrorCode::Internal => "internal",
        }
    }
}

/// HTTP status for an error code. Total and fixed.
pub fn http_status_for(code: ErrorCode) -> u16 {
    match code {
        ErrorCode::BadRequest => 400,
        ErrorCode::Unauthorized => 401,
        ErrorCode::Forbidden => 403,
        ErrorCode::NotFound => 404,
        ErrorCode::Conflict | ErrorCode::InsufficientStock => 409,
        ErrorCode::Unavailable => 503,
        ErrorCode::Internal => 500,
    }
}

/// The `{"code":…,"message":…}` error envelope.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadRequest, message)
    }

    pub fn unauthorized(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Unauthorized, message)
    }

    pub fn forbidden(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Forbidden, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::NotFound, message)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Conflict, message)
    }

    pub fn insufficient_stock(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::InsufficientStock, message)
    }

    pub fn unavailable(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Unavailable, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Internal, message)
    }

    pub fn status(&self) -> u16 {
        http_status_for(self.code)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error envelope always serializes")
    }
}

impl fmt::Display for ApiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code.as_str(), self.message)
    }
}

impl std::error::Error for ApiError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Customer,
    Admin,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Customer => "customer",
            Role::Admin => "admin",
        }
    }

    /// Whether a holder of `self` satisfies a requirement for `required`.
    /// Admin supersedes every role.
    pub fn satisfies(self, required: Option<Role>) -> bool {
        match required {
            None => true,
            Some(r) => self == r || self == Role::Admin,
        }
    }
}

impl std::str::FromStr for Role {
    type Err = ApiError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "customer" => Ok(Role::Customer),
            "admin" => Ok(Role::Admin),
            other => Err(ApiError::bad_request(format!("unknown role {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OrderStatus {
    Placed,
    Shipped,
    Delivered,
}

impl OrderStatus {
    /// The only status an order may move to next.
    pub fn successor(self) -> Option<OrderStatus> {
        match self {
            OrderStatus::Placed => Some(OrderStatus::Shipped),
            OrderStatus::Shipped => Some(OrderStatus::Delivered),
            OrderStatus::Delivered => None,
        }
    }

    pub fn can_transition_to(self, next: OrderStatus) -> bool {
        self.successor() == Some(next)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OrderStatus::Placed => "PLACED",
            OrderStatus::Shipped => "SHIPPED",
            OrderStatus::Delivered => "DELIVERED",
        }
    }
}

/// Invariant-carrying wire entity.
pub trait Entity: Serialize + DeserializeOwned {
    const KIND: EntityKind;

    fn validate(&self) -> Result<(), ApiError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntityKind {
    Book,
    User,
    CartItem,
    Order,
    OrderLine,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Book => "book",
            EntityKind::User => "user",
            EntityKind::CartItem => "cart_item",
            EntityKind::Order => "order",
            EntityKind::OrderLine => "order_line",
        }
    }
}

fn require_id(field: &str, value: &str) -> Result<(), ApiError> {
    if is_valid_id(value) {
        Ok(())
    } else {
        Err(ApiError::bad_request(format!(
            "{field} must be 32 lowercase hex characters"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Book {
    pub id: String,
    pub title: String,
    pub author: String,
    pub price_cents: u64,
    pub quantity: u64,
}

/// A book as submitted by an administrator, before an id is assigned.
/// A stray `id` in the submitted body is ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookDraft {
    pub title: String,
    pub author: String,
    pub price_cents: u64,
    pub quantity: u64,
}

impl BookDraft {
    pub fn validate(&self) -> Result<(), ApiError> {
        if self.title.trim().is_empty() {
            return Err(ApiError::bad_request("title must not be empty"));
        }
        Ok(())
    }

    pub fn into_book(self, id: String) -> Book {
        Book {
            id,
            title: self.title,
            author: self.author,
            price_cents: self.price_cents,
            quantity: self.quantity,
        }
    }
}

impl Entity for Book {
    const KIND: EntityKind = EntityKind::Book;

    fn validate(&self) -> Result<(), ApiError> {
        require_id("id", &self.id)?;
        if self.title.trim().is_empty() {
            return Err(ApiError::bad_request("title must not be empty"));
        }
        Ok(())
    }
}

/// Stored user. Never rendered into a response body; see [`PublicUser`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct User {
    pub id: String,
    pub username: String,
    pub password_hash: String,
    pub role: Role,
}

impl User {
    pub fn public(&self) -> PublicUser {
        PublicUser {
            id: self.id.clone(),
            username: self.username.clone(),
            role: self.role,
        }
    }
}

impl Entity for User {
    const KIND: EntityKind = EntityKind::User;

    fn validate(&self) -> Result<(), ApiError> {
        require_id("id", &self.id)?;
        if self.username.is_empty() {
            return Err(ApiError::bad_request("username must not be empty"));
        }
        Ok(())
    }
}

/// The profile fields of a user that may appear on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicUser {
    pub id: String,
    pub username: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CartItem {
    pub user_id: String,
    pub book_id: String,
    pub quantity: u64,
}

impl Entity for CartItem {
    const KIND: EntityKind = EntityKind::CartItem;

    fn validate(&self) -> Result<(), ApiError> {
        require_id("user_id", &self.user_id)?;
        require_id("book_id", &self.book_id)?;
        if self.quantity < 1 {
            return Err(ApiError::bad_request("quantity must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderLine {
    pub book_id: String,
    pub quantity: u64,
    pub unit_price_cents: u64,
}

impl OrderLine {
    pub fn subtotal_cents(&self) -> u64 {
        self.quantity * self.unit_price_cents
    }
}

impl Entity for OrderLine {
    const KIND: EntityKind = EntityKind::OrderLine;

    fn validate(&self) -> Result<(), ApiError> {
        require_id("book_id", &self.book_id)?;
        if self.quantity < 1 {
            return Err(ApiError::bad_request("line quantity must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Order {
    pub id: String,
    pub user_id: String,
    pub lines: Vec<OrderLine>,
    pub total_cents: u64,
    pub status: OrderStatus,
    pub created_at: u64,
}

impl Order {
    pub fn line_sum_cents(lines: &[OrderLine]) -> u64 {
        lines.iter().map(OrderLine::subtotal_cents).sum()
    }
}

impl Entity for Order {
    const KIND: EntityKind = EntityKind::Order;

    fn validate(&self) -> Result<(), ApiError> {
        require_id("id", &self.id)?;
        require_id("user_id", &self.user_id)?;
        if self.lines.is_empty() {
            return Err(ApiError::bad_request("order must have at least one line"));
        }
        for line in &self.lines {
            line.validate()?;
        }
        if self.total_cents != Order::line_sum_cents(&self.lines) {
            return Err(ApiError::bad_request(
                "total_cents does not equal the sum of its lines",
            ));
        }
        Ok(())
    }
}

/// Renders a valid entity as its canonical JSON object.
///
/// Invalid entities are rejected with `bad_request` instead of being encoded.
pub fn canonical_encode<T: Entity>(entity: &T) -> Result<String, ApiError> {
    entity.validate()?;
    serde_json::to_string(entity).map_err(|e| ApiError::internal(e.to_string()))
}

/// Parses `text` as an entity of type `T` and checks its invariants.
pub fn canonical_decode<T: Entity>(text: &str) -> Result<T, ApiError> {
    let entity: T = serde_json::from_str(text).map_err(|e| {
        ApiError::bad_request(format!("invalid {} document: {e}", T::KIND.as_str()))
    })?;
    entity.validate()?;
    Ok(entity)
}

/// Any entity, for callers that only know the kind at runtime.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnyEntity {
    Book(Book),
    User(User),
    CartItem(CartItem),
    Order(Order),
    OrderLine(OrderLine),
}

pub fn decode_kind(text: &str, kind: EntityKind) -> Result<AnyEntity, ApiError> {
    Ok(match kind {
        EntityKind::Book => AnyEntity::Book(canonical_decode(text)?),
        EntityKind::User => AnyEntity::User(canonical_decode(text)?),
        EntityKind::CartItem => AnyEntity::CartItem(canonical_decode(text)?),
        EntityKind::Order => AnyEntity::Order(canonical_decode(text)?),
        EntityKind::OrderLine => AnyEntity::OrderLine(canonical_decode(text)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dune() -> Book {
        Book {
            id: "0123456789abcdef0123456789abcdef".into(),
            title: "Dune".into(),
            author: "Herbert".into(),
            price_cents: 1099,
            quantity: 5,
        }
    }

    #[test]
    fn book_encodes_with_exact_keys() {
        let text = canonical_encode(&dune()).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let keys: Vec<&str> = value.as_object().unwrap().keys().map(String::as_str).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(sorted, ["author", "id", "price_cents", "quantity", "title"]);
        assert_eq!(value["price_cents"], 1099);
        assert!(text.contains("\"price_cents\":1099"));
    }

    #[test]
    fn order_with_no_lines_is_rejected_before_encoding() {
        let order = Order {
            id: new_id(),
            user_id: new_id(),
            lines: vec![],
            total_cents: 0,
            status: OrderStatus::Placed,
            created_at: 1,
        };
        let err = canonical_encode(&order).unwrap_err();
        assert_eq!(err.code, ErrorCode::BadRequest);
    }

    #[test]
    fn negative_quantity_is_bad_request() {
        let text = r#"{"id":"0123456789abcdef0123456789abcdef","title":"Dune","author":"Herbert","price_cents":1099,"quantity":-1}"#;
        let err = canonical_decode::<Book>(text).unwrap_err();
        assert_eq!(err.code, ErrorCode::BadRequest);
    }

    #[test]
    fn truncated_text_is_bad_request() {
        let text = canonical_encode(&dune()).unwrap();
        let err = canonical_decode::<Book>(&text[..text.len() - 5]).unwrap_err();
        assert_eq!(err.code, ErrorCode::BadRequest);
    }

    #[test]
    fn missing_field_and_wrong_kind_are_bad_request() {
        let missing = r#"{"id":"0123456789abcdef0123456789abcdef","title":"Dune","price_cents":1,"quantity":1}"#;
        assert_eq!(
            canonical_decode::<Book>(missing).unwrap_err().code,
            ErrorCode::BadRequest
        );
        let wrong = r#"{"id":"0123456789abcdef0123456789abcdef","title":"Dune","author":"x","price_cents":"1","quantity":1}"#;
        assert_eq!(
            canonical_decode::<Book>(wrong).unwrap_err().code,
            ErrorCode::BadRequest
        );
    }

    #[test]
    fn uppercase_id_is_rejected() {
        let mut b = dune();
        b.id = b.id.to_uppercase();
        assert!(canonical_encode(&b).is_err());
    }

    #[test]
    fn order_total_must_match_lines() {
        let line = OrderLine {
            book_id: new_id(),
            quantity: 2,
            unit_price_cents: 1099,
        };
        let mut order = Order {
            id: new_id(),
            user_id: new_id(),
            lines: vec![line],
            total_cents: 2198,
            status: OrderStatus::Placed,
            created_at: 5,
        };
        assert!(canonical_encode(&order).is_ok());
        order.total_cents = 2199;
        assert!(canonical_encode(&order).is_err());
    }

    #[test]
    fn status_table_is_fixed() {
        assert_eq!(http_status_for(ErrorCode::InsufficientStock), 409);
        assert_eq!(http_status_for(ErrorCode::NotFound), 404);
        assert_eq!(http_status_for(ErrorCode::Internal), 500);
        let table: Vec<u16> = ErrorCode::ALL.iter().map(|c| http_status_for(*c)).collect();
        assert_eq!(table, [400, 401, 403, 404, 409, 409, 503, 500]);
    }

    #[test]
    fn error_envelope_shape() {
        let e = ApiError::insufficient_stock("only 2 left");
        assert_eq!(e.to_json(), r#"{"code":"insufficient_stock","message":"only 2 left"}"#);
    }

    #[test]
    fn status_chain_only_moves_forward_one_step() {
        use OrderStatus::*;
        assert!(Placed.can_transition_to(Shipped));
        assert!(Shipped.can_transition_to(Delivered));
        assert!(!Placed.can_transition_to(Delivered));
        assert!(!Delivered.can_transition_to(Shipped));
        assert!(!Placed.can_transition_to(Placed));
    }

    #[test]
    fn admin_satisfies_every_requirement() {
        for req in [None, Some(Role::Admin), Some(Role::Customer)] {
            assert!(Role::Admin.satisfies(req));
        }
        assert!(!Role::Customer.satisfies(Some(Role::Admin)));
    }

    fn hex_id() -> impl Strategy<Value = String> {
        "[0-9a-f]{32}"
    }

    fn arb_book() -> impl Strategy<Value = Book> {
        (hex_id(), "[^\\p{C}]{0,20}[a-zA-Z]", ".{0,30}", any::<u64>(), any::<u64>()).prop_map(
            |(id, title, author, price_cents, quantity)| Book {
                id,
                title,
                author,
                price_cents,
                quantity,
            },
        )
    }

    fn arb_user() -> impl Strategy<Value = User> {
        (hex_id(), ".{0,10}[a-z]", "[0-9a-f$]{0,40}", any::<bool>()).prop_map(
            |(id, username, password_hash, admin)| User {
                id,
                username,
                password_hash,
                role: if admin { Role::Admin } else { Role::Customer },
            },
        )
    }

    fn arb_line() -> impl Strategy<Value = OrderLine> {
        (hex_id(), 1u64..1000, 0u64..1_000_000).prop_map(|(book_id, quantity, unit_price_cents)| {
            OrderLine {
                book_id,
                quantity,
                unit_price_cents,
            }
        })
    }

    fn arb_order() -> impl Strategy<Value = Order> {
        (
            hex_id(),
            hex_id(),
            prop::collection::vec(arb_line(), 1..6),
            0usize..3,
            any::<u64>(),
        )
            .prop_map(|(id, user_id, lines, s, created_at)| Order {
                id,
                user_id,
                total_cents: Order::line_sum_cents(&lines),
                lines,
                status: [OrderStatus::Placed, OrderStatus::Shipped, OrderStatus::Delivered][s],
                created_at,
            })
    }

    fn roundtrip<T: Entity + PartialEq + std::fmt::Debug>(x: &T) {
        let text = canonical_encode(x).unwrap();
        let back: T = canonical_decode(&text).unwrap();
        assert_eq!(&back, x);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn book_round_trip(b in arb_book()) { roundtrip(&b); }

        #[test]
        fn user_round_trip(u in arb_user()) { roundtrip(&u); }

        #[test]
        fn order_round_trip(o in arb_order()) { roundtrip(&o); }

        #[test]
        fn cart_item_round_trip(user_id in hex_id(), book_id in hex_id(), quantity in 1u64..u64::MAX) {
            roundtrip(&CartItem { user_id, book_id, quantity });
        }
    }
}
