//! Replica environment assembly.

use std::collections::BTreeMap;

/// Replaces `${NAME}` with `vars[NAME]`. Unknown names and unterminated
/// references are left as written.
pub fn expand(value: &str, vars: &BTreeMap<String, String>) -> String {
    let mut out = String::with_capacity(value.len());
    let mut rest = value;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find('}') {
            Some(end) => {
                let name = &after[..end];
                match vars.get(name) {
                    Some(v) => out.push_str(v),
                    None => out.push_str(&rest[start..start + 3 + end]),
                }
                rest = &after[end + 1..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// Port of replica `index` of the deployment at position `ordinal`.
pub fn replica_port(base: u16, ordinal: usize, index: u32) -> Option<u16> {
    let port = base as u64 + ordinal as u64 * crate::MAX_REPLICAS as u64 + index as u64;
    u16::try_from(port).ok()
}

/// `PATH` with `dirs` in front of the inherited value.
pub fn search_path(dirs: &[std::path::PathBuf]) -> String {
    let mut parts: Vec<String> = dirs.iter().map(|d| d.display().to_string()).collect();
    if let Ok(existing) = std::env::var("PATH") {
        parts.push(existing);
    }
    parts.join(":")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars() -> BTreeMap<String, String> {
        [("PORT", "7001"), ("VOLUME_DB", "/data/db")]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn substitutes_known_names() {
        assert_eq!(expand("${VOLUME_DB}/wal", &vars()), "/data/db/wal");
        assert_eq!(expand("http://h:${PORT}${PORT}", &vars()), "http://h:70017001");
        assert_eq!(expand("plain", &vars()), "plain");
    }

    #[test]
    fn leaves_unknown_and_broken_references() {
        assert_eq!(expand("${NOPE}-${PORT}", &vars()), "${NOPE}-7001");
        assert_eq!(expand("x${PORT", &vars()), "x${PORT");
        assert_eq!(expand("$PORT", &vars()), "$PORT");
    }

    #[test]
    fn ports_are_disjoint_per_deployment() {
        assert_eq!(replica_port(20000, 0, 0), Some(20000));
        assert_eq!(replica_port(20000, 2, 5), Some(20205));
        assert_eq!(replica_port(65500, 1, 0), None);
    }
}
