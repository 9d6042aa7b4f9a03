//! Core building blocks for the bookstore cluster.
//!
//! * [`contracts`] holds the wire entities every service exchanges, the error
//!   envelope and the health/metrics conventions.
//! * [`datastore`] is the single-writer, versioned key-value engine with
//!   compare-and-swap that backs every service.
//! * [`manifest`] parses and renders the declarative cluster manifest.
//! * [`orchestrate`] contains the pure planning pieces of the conductor:
//!   reconcile planning, probe state machine, restart backoff, autoscaling
//!   and round-robin selection.
//! * [`procfs`] reads per-process CPU time and resident memory.

pub mod contracts;
pub mod datastore;
pub mod manifest;
pub mod orchestrate;
pub mod procfs;

pub use contracts::{
    canonical_decode, canonical_encode, http_status_for, ApiError, Book, BookDraft, CartItem,
    EntityKind, ErrorCode, Order, OrderLine, OrderStatus, PublicUser, Role, User,
};
pub use datastore::{FlushPolicy, Record, Store, StoreError};
pub use manifest::{DeploymentSpec, Manifest, ManifestError, ServiceSpec, VolumeClaim};
pub use orchestrate::{Action, ObservedReplica, Phase};

/// Milliseconds since the Unix epoch, wall clock.
pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}
