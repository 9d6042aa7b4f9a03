//! Registration, login and role-based authorization.
//!
//! Key layout in the datastore:
//! * `user/<id>`: the [`User`] record, password hash included.
//! * `username/<name>`: uniqueness claim holding the owning user id, created
//!   with compare-and-swap against version 0.
//! * `session/<token>`: a [`Session`], checked for expiry when used.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::Response;
use axum::routing::{get, post};
use axum::Router;
use bookstore_core::contracts::{is_valid_id, is_valid_token, new_id, new_token};
use bookstore_core::{canonical_decode, canonical_encode, now_ms, ApiError, Role, User};
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

use crate::clients::{Identity, KvClient, KvError};
use crate::http::{bearer_token, json, parse_body, HttpResult};
use crate::password;
use crate::telemetry::{instrument, Telemetry};

pub const SESSION_TTL_MS: u64 = 24 * 60 * 60 * 1000;
pub const MIN_PASSWORD_LEN: usize = 8;

#[derive(Debug, Clone)]
pub struct Config {
    pub port: u16,
    pub datastore_url: String,
    pub hash_iterations: u32,
    pub session_ttl_ms: u64,
}

impl Config {
    /// `PORT`, `DATASTORE_URL`, optional `HASH_ITERATIONS` and `SESSION_TTL_MS`.
    pub fn from_env() -> Result<Self, String> {
        let parse = |name: &str, default: u64| -> Result<u64, String> {
            match std::env::var(name) {
                Ok(v) => v.parse().map_err(|_| format!("{name} must be an integer")),
                Err(_) => Ok(default),
            }
        };
        Ok(Self {
            port: crate::env_port()?,
            datastore_url: crate::env_var("DATASTORE_URL")?,
            hash_iterations: parse("HASH_ITERATIONS", password::DEFAULT_ITERATIONS as u64)? as u32,
            session_ttl_ms: parse("SESSION_TTL_MS", SESSION_TTL_MS)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub token: String,
    pub user_id: String,
    pub role: Role,
    pub expires_at: u64,
}

#[derive(Clone)]
struct AppState {
    kv: KvClient,
    iterations: u32,
    ttl_ms: u64,
}

#[derive(Deserialize)]
struct Registration {
    username: String,
    password: String,
    #[serde(default = "default_role")]
    role: Role,
}

fn default_role() -> Role {
    Role::Customer
}

#[derive(Deserialize)]
struct Credentials {
    username: String,
    password: String,
}

async fn hash_blocking(password: String, iterations: u32) -> Result<String, ApiError> {
    tokio::task::spawn_blocking(move || password::hash(&password, iterations))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))
}

async fn verify_blocking(password: String, stored: String) -> Result<bool, ApiError> {
    tokio::task::spawn_blocking(move || password::verify(&password, &stored))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))
}

async fn register(State(st): State<AppState>, body: Bytes) -> HttpResult<Response> {
    let reg: Registration = parse_body(&body)?;
    if reg.username.trim().is_empty() {
        return Err(ApiError::bad_request("username must not be empty").into());
    }
    if reg.password.chars().count() < MIN_PASSWORD_LEN {
        return Err(ApiError::bad_request(format!(
            "password must be at least {MIN_PASSWORD_LEN} characters"
        ))
        .into());
    }
    let id = new_id();
    match st.kv.put(&format!("username/{}", reg.username), &id, Some(0)).await {
        Ok(_) => {}
        Err(KvError::Conflict) => {
            return Err(ApiError::conflict(format!("username {:?} is taken", reg.username)).into())
        }
        Err(KvError::Api(e)) => return Err(e.into()),
    }
    let user = User {
        id: id.clone(),
        username: reg.username,
        password_hash: hash_blocking(reg.password, st.iterations).await?,
        role: reg.role,
    };
    let doc = canonical_encode(&user)?;
    st.kv
        .put(&format!("user/{id}"), &doc, Some(0))
        .await
        .map_err(ApiError::from)?;
    Ok(json(StatusCode::CREATED, &user.public()))
}

async fn load_user(kv: &KvClient, id: &str) -> Result<Option<User>, ApiError> {
    match kv.get(&format!("user/{id}")).await? {
        Some((doc, _)) => Ok(Some(canonical_decode(&doc)?)),
        None => Ok(None),
    }
}

fn bad_credentials() -> ApiError {
    ApiError::unauthorized("invalid username or password")
}

async fn login(State(st): State<AppState>, body: Bytes) -> HttpResult<Response> {
    let creds: Credentials = parse_body(&body)?;
    let user = match st.kv.get(&format!("username/{}", creds.username)).await? {
        Some((id, _)) => load_user(&st.kv, &id).await?,
        None => None,
    };
    let Some(user) = user else {
        // Burn the same work as a real check so timing does not reveal
        // whether the username exists.
        let _ = verify_blocking(creds.password, password::hash("", st.iterations)).await;
        return Err(bad_credentials().into());
    };
    if !verify_blocking(creds.password, user.password_hash.clone()).await? {
        return Err(bad_credentials().into());
    }
    let session = Session {
        token: new_token(),
        user_id: user.id.clone(),
        role: user.role,
        expires_at: now_ms() + st.ttl_ms,
    };
    let doc = serde_json::to_string(&session).map_err(|e| ApiError::internal(e.to_string()))?;
    st.kv
        .put(&format!("session/{}", session.token), &doc, Some(0))
        .await
        .map_err(ApiError::from)?;
    Ok(json(StatusCode::OK, &session))
}

#[derive(Deserialize)]
struct AuthorizeQuery {
    role: Option<String>,
}

async fn authorize(
    State(st): State<AppState>,
    Query(q): Query<AuthorizeQuery>,
    headers: HeaderMap,
) -> HttpResult<Response> {
    let required = q.role.as_deref().map(str::parse::<Role>).transpose()?;
    let token = bearer_token(&headers).ok_or_else(|| ApiError::unauthorized("missing bearer token"))?;
    if !is_valid_token(token) {
        return Err(ApiError::unauthorized("unknown session").into());
    }
    let key = format!("session/{token}");
    let Some((doc, version)) = st.kv.get(&key).await? else {
        return Err(ApiError::unauthorized("unknown session").into());
    };
    let session: Session = serde_json::from_str(&doc).map_err(|e| ApiError::internal(e.to_string()))?;
    if now_ms() >= session.expires_at {
        let _ = st.kv.delete(&key, Some(version)).await;
        return Err(ApiError::unauthorized("session expired").into());
    }
    if !session.role.satisfies(required) {
        return Err(ApiError::forbidden("role does not permit this operation").into());
    }
    Ok(json(
        StatusCode::OK,
        &Identity {
            user_id: session.user_id,
            role: session.role,
        },
    ))
}

async fn get_user(State(st): State<AppState>, Path(id): Path<String>) -> HttpResult<Response> {
    if !is_valid_id(&id) {
        return Err(ApiError::not_found("no such user").into());
    }
    let user = load_user(&st.kv, &id)
        .await?
        .ok_or_else(|| ApiError::not_found("no such user"))?;
    Ok(json(StatusCode::OK, &user.public()))
}

pub fn router(config: &Config) -> Router {
    let state = AppState {
        kv: KvClient::new(&config.datastore_url),
        iterations: config.hash_iterations,
        ttl_ms: config.session_ttl_ms,
    };
    let app = Router::new()
        .route("/users", post(register))
        .route("/users/{id}", get(get_user))
        .route("/login", post(login))
        .route("/authorize", get(authorize))
        .with_state(state)
        .layer(CorsLayer::permissive());
    instrument(app, Arc::new(Telemetry::new()))
}

pub async fn run(config: Config) -> Result<(), String> {
    crate::serve(router(&config), config.port)
        .await
        .map_err(|e| format!("serve on port {}: {e}", config.port))
}
