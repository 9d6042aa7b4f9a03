//! Random identifiers: 128-bit entity ids and 256-bit session tokens, both
//! rendered as lowercase hex.

use rand::RngCore;

pub fn new_id() -> String {
    let mut bytes = [0u8; 16];
    rand::rng().fill_bytes(&mut bytes);
    hex::encode(bytes)
}

pub fn new_token() -> String {
    let mut bytes = [0u8; 32];
    rand::rng().fill_bytes(&mut bytes);
    hex::encode(bytes)
}

fn is_lower_hex(s: &str, len: usize) -> bool {
    s.len() == len && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

pub fn is_valid_id(s: &str) -> bool {
    is_lower_hex(s, 32)
}

pub fn is_valid_token(s: &str) -> bool {
    is_lower_hex(s, 64)
}
