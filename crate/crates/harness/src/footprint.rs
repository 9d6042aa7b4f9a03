//! Bytes on disk attributable to a deployable target.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use walkdir::WalkDir;

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FootprintReport {
    pub target: String,
    pub bytes_on_disk: u64,
    /// Regular files and their sizes, sorted by path.
    pub files: Vec<(PathBuf, u64)>,
}

/// Sums regular-file sizes under `paths`. Symlinks are neither followed nor
/// counted, and a file reachable from two of the paths is counted once.
pub fn measure_footprint(target: &str, paths: &[impl AsRef<Path>]) -> Result<FootprintReport, HarnessError> {
    let mut files = BTreeMap::new();
    for root in paths {
        let root = root.as_ref();
        std::fs::symlink_metadata(root).map_err(|source| HarnessError::Path {
            path: root.to_path_buf(),
            source,
        })?;
        for entry in WalkDir::new(root).follow_links(false).follow_root_links(false) {
            let entry = entry.map_err(|e| HarnessError::Path {
                path: e.path().unwrap_or(root).to_path_buf(),
                source: e.into(),
            })?;
            if !entry.file_type().is_file() {
                continue;
            }
            let len = entry
                .metadata()
                .map_err(|e| HarnessError::Path {
                    path: entry.path().to_path_buf(),
                    source: e.into(),
                })?
                .len();
            files.insert(entry.into_path(), len);
        }
    }
    Ok(FootprintReport {
        target: target.to_string(),
        bytes_on_disk: files.values().sum(),
        files: files.into_iter().collect(),
    })
}
