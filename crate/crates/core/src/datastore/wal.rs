//! Write-ahead log framing.
//!
//! Each entry is one line: `<len> <json>\n`, where `<len>` is the decimal byte
//! length of `<json>`. The trailing newline is the commit marker; an entry
//! whose bytes or newline are missing was never acknowledged and is dropped
//! during replay together with everything after it.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WalOp {
    Put,
    Delete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalEntry {
    pub op: WalOp,
    pub key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    pub version: u64,
}

impl WalEntry {
    pub fn put(key: &str, value: &str, version: u64) -> Self {
        Self {
            op: WalOp::Put,
            key: key.to_string(),
            value: Some(value.to_string()),
            version,
        }
    }

    pub fn delete(key: &str, version: u64) -> Self {
        Self {
            op: WalOp::Delete,
            key: key.to_string(),
            value: None,
            version,
        }
    }
}

/// Frames one entry, commit marker included.
pub fn encode(entry: &WalEntry) -> Vec<u8> {
    let json = serde_json::to_string(entry).expect("wal entry always serializes");
    let mut out = Vec::with_capacity(json.len() + 12);
    out.extend_from_slice(json.len().to_string().as_bytes());
    out.push(b' ');
    out.extend_from_slice(json.as_bytes());
    out.push(b'\n');
    out
}

/// Decodes the committed prefix of a log.
///
/// Returns the entries in order and the byte length of the committed prefix.
pub fn decode(bytes: &[u8]) -> (Vec<WalEntry>, usize) {
    let mut entries = Vec::new();
    let mut pos = 0;
    while let Some((entry, next)) = decode_one(bytes, pos) {
        entries.push(entry);
        pos = next;
    }
    (entries, pos)
}

fn decode_one(bytes: &[u8], pos: usize) -> Option<(WalEntry, usize)> {
    let rest = &bytes[pos..];
    let space = rest.iter().take(21).position(|&b| b == b' ')?;
    if space == 0 {
        return None;
    }
    let len: usize = std::str::from_utf8(&rest[..space]).ok()?.parse().ok()?;
    let body_start = space + 1;
    let body_end = body_start.checked_add(len)?;
    if rest.len() <= body_end || rest[body_end] != b'\n' {
        return None;
    }
    let entry: WalEntry = serde_json::from_slice(&rest[body_start..body_end]).ok()?;
    Some((entry, pos + body_end + 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_layout() {
        let bytes = encode(&WalEntry::put("k", "v", 1));
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text, "46 {\"op\":\"put\",\"key\":\"k\",\"value\":\"v\",\"version\":1}\n");
        let del = String::from_utf8(encode(&WalEntry::delete("k", 2))).unwrap();
        assert!(del.ends_with("{\"op\":\"delete\",\"key\":\"k\",\"version\":2}\n"));
    }

    #[test]
    fn every_truncation_point_yields_a_committed_prefix() {
        let mut log = Vec::new();
        let mut boundaries = vec![0];
        for i in 0..5u64 {
            log.extend(encode(&WalEntry::put(&format!("key{i}"), "line\nbreak", i + 1)));
            boundaries.push(log.len());
        }
        for cut in 0..=log.len() {
            let (entries, committed) = decode(&log[..cut]);
            let expect = boundaries.iter().rposition(|&b| b <= cut).unwrap();
            assert_eq!(entries.len(), expect, "cut at {cut}");
            assert_eq!(committed, boundaries[expect]);
        }
    }

    #[test]
    fn garbage_tail_is_ignored() {
        let mut log = encode(&WalEntry::put("a", "1", 1));
        log.extend_from_slice(b"99999 {\"op\":");
        let (entries, committed) = decode(&log);
        assert_eq!(entries.len(), 1);
        assert_eq!(committed, encode(&WalEntry::put("a", "1", 1)).len());
    }
}
