//! `report`: one run as a table, two runs side by side.

use std::path::{Path, PathBuf};

use bookstore_harness::compare::{compare_runs, Comparison, RunData};
use bookstore_harness::{paper_reference, HarnessError};

use crate::{create_out_dir, runtime, usage, CmdResult};

pub fn report(runs: &[PathBuf], overlay: bool, out: &Path) -> CmdResult {
    let load = |dir: &PathBuf| {
        RunData::load(dir).map_err(|e| match e {
            HarnessError::NotFound(what) => usage(format!("missing artifact {what}")),
            other => usage(other.to_string()),
        })
    };
    let mut comparison = match runs {
        [one] => Comparison::single(&load(one)?),
        [a, b] => compare_runs(&load(a)?, &load(b)?).map_err(|e| usage(e.to_string()))?,
        _ => return Err(usage("report takes one run directory, or two to compare")),
    };
    if overlay {
        comparison = comparison.with_overlay(&paper_reference());
    }
    create_out_dir(out)?;
    let text = comparison.render_text();
    let csv = comparison.to_csv().map_err(|e| runtime(e.to_string()))?;
    for (name, body) in [("comparison.txt", &text), ("comparison.csv", &csv)] {
        let path = out.join(name);
        std::fs::write(&path, body).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    }
    print!("{text}");
    Ok(())
}
