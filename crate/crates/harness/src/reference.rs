//! Reported reference values, bundled read-only for report overlays. They
//! come from a different environment and are never reproduced here.

use serde::{Deserialize, Serialize};

use crate::HarnessError;

pub const PAPER_REFERENCE_CSV: &str = include_str!("../data/paper_reference.csv");
pub const OVERLAY_LABEL: &str = "paper-reported (not reproduced)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub service: String,
    pub metric: String,
    pub environment: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaperReference {
    pub rows: Vec<ReferenceRow>,
}

pub fn paper_reference() -> PaperReference {
    let rows = csv::Reader::from_reader(PAPER_REFERENCE_CSV.as_bytes())
        .deserialize()
        .collect::<Result<Vec<ReferenceRow>, _>>()
        .expect("bundled reference csv is well formed");
    PaperReference { rows }
}

impl PaperReference {
    pub fn lookup(&self, service: &str, metric: &str, environment: &str) -> Result<f64, HarnessError> {
        self.rows
            .iter()
            .find(|r| r.service == service && r.metric == metric && r.environment == environment)
            .map(|r| r.value)
            .ok_or_else(|| HarnessError::NotFound(format!("reference {service}/{metric}/{environment}")))
    }
}
