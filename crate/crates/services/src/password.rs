//! Salted, iterated password hashing (PBKDF2-HMAC-SHA256).
//!
//! Stored form: `<iterations>$<salt hex>$<digest hex>` with a 16-byte random
//! salt and a 32-byte digest.

use rand::RngCore;
use sha2::Sha256;
use subtle::ConstantTimeEq;

pub const DEFAULT_ITERATIONS: u32 = 10_000;
const SALT_LEN: usize = 16;
const DIGEST_LEN: usize = 32;

fn derive(password: &str, salt: &[u8], iterations: u32) -> [u8; DIGEST_LEN] {
    pbkdf2::pbkdf2_hmac_array::<Sha256, DIGEST_LEN>(password.as_bytes(), salt, iterations)
}

pub fn hash(password: &str, iterations: u32) -> String {
    let mut salt = [0u8; SALT_LEN];
    rand::rng().fill_bytes(&mut salt);
    let digest = derive(password, &salt, iterations);
    format!("{iterations}${}${}", hex::encode(salt), hex::encode(digest))
}

/// Checks `password` against a stored hash. Malformed hashes never verify.
pub fn verify(password: &str, stored: &str) -> bool {
    let mut parts = stored.split('$');
    let (Some(iter), Some(salt), Some(digest), None) =
        (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return false;
    };
    let (Ok(iterations), Ok(salt), Ok(expected)) =
        (iter.parse::<u32>(), hex::decode(salt), hex::decode(digest))
    else {
        return false;
    };
    if iterations == 0 || expected.len() != DIGEST_LEN {
        return false;
    }
    derive(password, &salt, iterations).ct_eq(&expected).into()
}
