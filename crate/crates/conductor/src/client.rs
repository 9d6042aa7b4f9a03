//! Client for the admin API, used by the CLI and the measurement harness.

use std::time::{Duration, Instant};

use bookstore_core::ApiError;
use bookstore_services::http::decode_envelope;
use reqwest::Client;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::state::{ApplySummary, ClusterState, KillRequest, KillResponse, ScaleRequest};

#[derive(Clone)]
pub struct AdminClient {
    base: String,
    http: Client,
}

impl AdminClient {
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: Client::builder()
                .timeout(Duration::from_secs(30))
                .build()
                .expect("http client builds"),
        }
    }

    pub fn local(port: u16) -> Self {
        Self::new(format!("http://127.0.0.1:{port}"))
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    async fn finish<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, ApiError> {
        let status = resp.status();
        let text = resp
            .text()
            .await
            .map_err(|e| ApiError::unavailable(format!("conductor: {e}")))?;
        if !status.is_success() {
            return Err(decode_envelope(status.as_u16(), &text));
        }
        serde_json::from_str(&text).map_err(|e| ApiError::internal(format!("conductor reply: {e}")))
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ApiError> {
        let resp = self
            .http
            .post(format!("{}{path}", self.base))
            .json(body)
            .send()
            .await
            .map_err(|e| ApiError::unavailable(format!("conductor unreachable: {e}")))?;
        Self::finish(resp).await
    }

    /// Whether the admin API answers at all.
    pub async fn reachable(&self) -> bool {
        self.http
            .get(format!("{}/health", self.base))
            .timeout(Duration::from_millis(500))
            .send()
            .await
            .is_ok_and(|r| r.status().is_success())
    }

    pub async fn apply(&self, manifest_text: &str) -> Result<ApplySummary, ApiError> {
        let resp = self
            .http
            .post(format!("{}/apply", self.base))
            .body(manifest_text.to_string())
            .send()
            .await
            .map_err(|e| ApiError::unavailable(format!("conductor unreachable: {e}")))?;
        Self::finish(resp).await
    }

    pub async fn state(&self) -> Result<ClusterState, ApiError> {
        let resp = self
            .http
            .get(format!("{}/state", self.base))
            .send()
            .await
            .map_err(|e| ApiError::unavailable(format!("conductor unreachable: {e}")))?;
        Self::finish(resp).await
    }

    pub async fn scale(&self, deployment: &str, replicas: u32) -> Result<(), ApiError> {
        let req = ScaleRequest {
            deployment: deployment.to_string(),
            replicas,
        };
        self.post::<_, serde_json::Value>("/scale", &req).await.map(drop)
    }

    pub async fn kill(&self, deployment: &str, index: u32) -> Result<u64, ApiError> {
        let req = KillRequest {
            deployment: deployment.to_string(),
            index,
        };
        Ok(self.post::<_, KillResponse>("/kill", &req).await?.killed_at_ms)
    }

    pub async fn shutdown(&self) -> Result<(), ApiError> {
        self.post::<_, serde_json::Value>("/shutdown", &()).await.map(drop)
    }

    /// Polls `/state` until `done` holds or `timeout` passes; returns the
    /// last snapshot either way.
    pub async fn wait_for(
        &self,
        timeout: Duration,
        mut done: impl FnMut(&ClusterState) -> bool,
    ) -> Result<(bool, ClusterState), ApiError> {
        let deadline = Instant::now() + timeout;
        loop {
            let state = self.state().await?;
            if done(&state) {
                return Ok((true, state));
            }
            if Instant::now() >= deadline {
                return Ok((false, state));
            }
            tokio::time::sleep(Duration::from_millis(50)).await;
        }
    }
}
