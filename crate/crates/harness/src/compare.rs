//! Side-by-side comparison of two runs' `report.csv`, with an optional
//! overlay of the bundled reference values.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::artifacts::{read_csv, ReportRow, REPORT_CSV};
use crate::reference::{PaperReference, OVERLAY_LABEL};
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunData {
    pub label: String,
    pub rows: Vec<ReportRow>,
}

impl RunData {
    pub fn new(label: impl Into<String>, rows: Vec<ReportRow>) -> Self {
        Self {
            label: label.into(),
            rows,
        }
    }

    /// Reads `<dir>/report.csv`, labelled with the directory name.
    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let path = dir.join(REPORT_CSV);
        if !path.is_file() {
            return Err(HarnessError::NotFound(format!("{}", path.display())));
        }
        let label = dir
            .file_name()
            .map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
        Ok(Self::new(label, read_csv(&path)?))
    }

    fn scenarios(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.scenario.as_str()).collect()
    }

    fn values(&self) -> BTreeMap<(&str, &str), f64> {
        self.rows
            .iter()
            .map(|r| ((r.scenario.as_str(), r.metric.as_str()), r.value))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub section: String,
    pub scenario: String,
    pub metric: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub abs_delta: Option<f64>,
    pub pct_delta: Option<f64>,
}

impl ComparisonRow {
    fn new(section: &str, scenario: &str, metric: &str, a: Option<f64>, b: Option<f64>) -> Self {
        let abs_delta = a.zip(b).map(|(a, b)| b - a);
        let pct_delta = a.zip(b).and_then(|(a, b)| (a != 0.0).then(|| (b - a) / a * 100.0));
        Self {
            section: section.to_string(),
            scenario: scenario.to_string(),
            metric: metric.to_string(),
            a,
            b,
            abs_delta,
            pct_delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub label_a: String,
    /// `None` for a single-run table.
    pub label_b: Option<String>,
    pub rows: Vec<ComparisonRow>,
    pub overlay: Vec<ComparisonRow>,
}

const MEASURED: &str = "measured";

pub fn compare_runs(a: &RunData, b: &RunData) -> Result<Comparison, HarnessError> {
    let (sa, sb) = (a.scenarios(), b.scenarios());
    if sa != sb {
        let only = |x: &BTreeSet<&str>, y: &BTreeSet<&str>| x.difference(y).copied().collect::<Vec<_>>().join(", ");
        return Err(HarnessError::LabelMismatch(format!(
            "only in {}: [{}]; only in {}: [{}]",
            a.label,
            only(&sa, &sb),
            b.label,
            only(&sb, &sa)
        )));
    }
    let (va, vb) = (a.values(), b.values());
    let keys: BTreeSet<(&str, &str)> = va.keys().chain(vb.keys()).copied().collect();
    Ok(Comparison {
        label_a: a.label.clone(),
        label_b: Some(b.label.clone()),
        rows: keys
            .into_iter()
            .map(|k| ComparisonRow::new(MEASURED, k.0, k.1, va.get(&k).copied(), vb.get(&k).copied()))
            .collect(),
        overlay: Vec::new(),
    })
}

impl Comparison {
    pub fn single(run: &RunData) -> Self {
        Self {
            label_a: run.label.clone(),
            label_b: None,
            rows: run
                .values()
                .into_iter()
                .map(|(k, v)| ComparisonRow::new(MEASURED, k.0, k.1, Some(v), None))
                .collect(),
            overlay: Vec::new(),
        }
    }

    /// Appends reference rows with the `vm` value as `a` and `container` as `b`.
    pub fn with_overlay(mut self, reference: &PaperReference) -> Self {
        let mut grouped: BTreeMap<(&str, &str), (Option<f64>, Option<f64>)> = BTreeMap::new();
        for r in &reference.rows {
            let slot = grouped.entry((&r.service, &r.metric)).or_default();
            match r.environment.as_str() {
                "container" => slot.1 = Some(r.value),
                _ => slot.0 = Some(r.value),
            }
        }
        self.overlay = grouped
            .into_iter()
            .map(|((service, metric), (vm, container))| ComparisonRow::new(OVERLAY_LABEL, service, metric, vm, container))
            .collect();
        self
    }

    pub fn to_csv(&self) -> Result<String, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in self.rows.iter().chain(&self.overlay) {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn render_text(&self) -> String {
        let cell = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:+.1}%"));
        let mut out = String::new();
        let table = |out: &mut String, rows: &[ComparisonRow], a: &str, b: Option<&str>| {
            match b {
                Some(b) => {
                    let _ = writeln!(out, "{:<28} {:<20} {:>14} {:>14} {:>14} {:>9}", "scenario", "metric", a, b, "delta", "delta%");
                    for r in rows {
                        let _ = writeln!(
                            out,
                            "{:<28} {:<20} {:>14} {:>14} {:>14} {:>9}",
                            r.scenario, r.metric, cell(r.a), cell(r.b), cell(r.abs_delta), pct(r.pct_delta)
                        );
                    }
                }
                None => {
                    let _ = writeln!(out, "{:<28} {:<20} {:>14}", "scenario", "metric", a);
                    for r in rows {
                        let _ = writeln!(out, "{:<28} {:<20} {:>14}", r.scenario, r.metric, cell(r.a));
                    }
                }
            }
        };
        table(&mut out, &self.rows, &self.label_a, self.label_b.as_deref());
        if !self.overlay.is_empty() {
            let _ = writeln!(out, "\n{OVERLAY_LABEL}");
            table(&mut out, &self.overlay, "vm", Some("container"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::paper_reference;

    fn run(label: &str, rows: &[(&str, &str, f64)]) -> RunData {
        RunData::new(label, rows.iter().map(|&(s, m, v)| ReportRow::new(s, m, v)).collect())
    }

    #[test]
    fn identical_runs_have_zero_deltas() {
        let a = run("a", &[("load/books", "mean_ms", 12.5), ("boot/stub", "boot_ms", 510.0)]);
        let c = compare_runs(&a, &a.clone()).unwrap();
        assert!(c.rows.iter().all(|r| r.abs_delta == Some(0.0) && r.pct_delta == Some(0.0)));
    }

    #[test]
    fn percent_delta() {
        let a = run("a", &[("boot", "boot_ms", 2000.0)]);
        let b = run("b", &[("boot", "boot_ms", 500.0)]);
        let c = compare_runs(&a, &b).unwrap();
        assert_eq!(c.rows[0].abs_delta, Some(-1500.0));
        assert_eq!(c.rows[0].pct_delta, Some(-75.0));
        assert!(c.render_text().contains("-75.0%"));
        let csv = c.to_csv().unwrap();
        assert!(csv.starts_with("section,scenario,metric,a,b,abs_delta,pct_delta\n"), "{csv}");
    }

    #[test]
    fn label_mismatch_lists_difference() {
        let a = run("a", &[("idle", "x", 1.0), ("load", "x", 1.0)]);
        let b = run("b", &[("idle", "x", 1.0), ("boot", "x", 1.0)]);
        let err = compare_runs(&a, &b).unwrap_err().to_string();
        assert!(err.contains("only in a: [load]") && err.contains("only in b: [boot]"), "{err}");
    }

    #[test]
    fn single_run_and_overlay() {
        let c = Comparison::single(&run("a", &[("idle", "x", 1.0)])).with_overlay(&paper_reference());
        assert_eq!(c.rows[0].abs_delta, None);
        let orders = c
            .overlay
            .iter()
            .find(|r| r.scenario == "orders" && r.metric == "response_ms")
            .unwrap();
        assert_eq!((orders.a, orders.b), (Some(780.0), Some(625.0)));
        let text = c.render_text();
        assert!(text.contains(OVERLAY_LABEL));
        assert!(text.contains("780.000") && text.contains("625.000"));
    }
}
