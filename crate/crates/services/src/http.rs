//! Error envelope and request-body helpers shared by the handlers.

use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use bookstore_core::ApiError;
use serde::de::DeserializeOwned;

/// An [`ApiError`] rendered as an HTTP response.
#[derive(Debug)]
pub struct HttpError(pub ApiError);

impl From<ApiError> for HttpError {
    fn from(e: ApiError) -> Self {
        HttpError(e)
    }
}

impl IntoResponse for HttpError {
    fn into_response(self) -> Response {
        let status =
            StatusCode::from_u16(self.0.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (
            status,
            [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))],
            self.0.to_json(),
        )
            .into_response()
    }
}

pub type HttpResult<T> = Result<T, HttpError>;

/// Decodes a JSON request body, mapping every failure to `bad_request`.
pub fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

/// JSON response with an explicit status.
pub fn json<T: serde::Serialize>(status: StatusCode, value: &T) -> Response {
    match serde_json::to_string(value) {
        Ok(body) => (
            status,
            [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))],
            body,
        )
            .into_response(),
        Err(e) => HttpError(ApiError::internal(e.to_string())).into_response(),
    }
}

/// Token from an `Authorization: Bearer <token>` header.
pub fn bearer_token(headers: &HeaderMap) -> Option<&str> {
    let value = headers.get(header::AUTHORIZATION)?.to_str().ok()?;
    let token = value.strip_prefix("Bearer ").or_else(|| value.strip_prefix("bearer "))?;
    let token = token.trim();
    (!token.is_empty()).then_some(token)
}

/// Decodes an error envelope returned by another service, falling back to a
/// generic error for the status when the body is not an envelope.
pub fn decode_envelope(status: u16, body: &str) -> ApiError {
    serde_json::from_str::<ApiError>(body).unwrap_or_else(|_| match status {
        400 => ApiError::bad_request(body.to_string()),
        401 => ApiError::unauthorized(body.to_string()),
        403 => ApiError::forbidden(body.to_string()),
        404 => ApiError::not_found(body.to_string()),
        409 => ApiError::conflict(body.to_string()),
        502..=504 => ApiError::unavailable(format!("upstream returned {status}")),
        _ => ApiError::internal(format!("upstream returned {status}: {body}")),
    })
}
