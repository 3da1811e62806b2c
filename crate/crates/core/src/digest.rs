//! Short content digests used as stable join keys.

use sha2::{Digest, Sha256};

/// First 16 hex characters of the SHA-256 over the concatenated parts.
pub fn digest16(parts: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p);
    }
    let out = hasher.finalize();
    let mut hex = String::with_capacity(16);
    for byte in out.iter().take(8) {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}
