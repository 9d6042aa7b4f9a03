//! Point-in-time cluster snapshot served by `GET /state`.

use bookstore_core::Phase;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaState {
    pub deployment: String,
    pub index: u32,
    pub phase: Phase,
    pub pid: Option<u32>,
    pub port: u16,
    pub restarts: u32,
    pub started_at: Option<u64>,
    pub ready_at: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentState {
    pub name: String,
    pub desired: u32,
    pub exec: String,
    /// Manifest env entries, before `${NAME}` expansion.
    #[serde(default)]
    pub env: Vec<(String, String)>,
    pub cpu_target_percent: Option<u8>,
    pub min_replicas: u32,
    pub max_replicas: u32,
    pub volume_path: Option<String>,
    pub replicas: Vec<ReplicaState>,
}

impl DeploymentState {
    pub fn ready(&self) -> usize {
        self.replicas.iter().filter(|r| r.phase == Phase::Ready).count()
    }

    pub fn replica(&self, index: u32) -> Option<&ReplicaState> {
        self.replicas.iter().find(|r| r.index == index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceState {
    pub name: String,
    pub listen_port: u16,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeState {
    pub name: String,
    pub path: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    pub taken_at: u64,
    /// Working directory of replicas; relative paths in env values resolve here.
    #[serde(default)]
    pub workdir: String,
    pub deployments: Vec<DeploymentState>,
    pub services: Vec<ServiceState>,
    pub volumes: Vec<VolumeState>,
}

impl ClusterState {
    pub fn deployment(&self, name: &str) -> Option<&DeploymentState> {
        self.deployments.iter().find(|d| d.name == name)
    }

    pub fn service(&self, name: &str) -> Option<&ServiceState> {
        self.services.iter().find(|s| s.name == name)
    }

    /// Every desired replica of every deployment is Ready.
    pub fn all_ready(&self) -> bool {
        self.deployments.iter().all(|d| {
            d.ready() == d.desired as usize
                && d.replicas.iter().filter(|r| r.phase != Phase::Terminated).count() == d.desired as usize
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplySummary {
    pub deployments: usize,
    pub services: usize,
    pub volumes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleRequest {
    pub deployment: String,
    pub replicas: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KillRequest {
    pub deployment: String,
    pub index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KillResponse {
    pub killed_at_ms: u64,
}
