//! Deterministic derivation of per-stage RNG seeds from one master seed.

use sha2::{Digest, Sha256};

/// First eight bytes (little-endian) of SHA-256 over
/// `master (u64 LE) || stage (UTF-8) || 0x00 || index (u64 LE)`.
pub fn derive_seed(master: u64, stage: &str, index: u64) -> u64 {
    let digest = Sha256::new()
        .chain_update(master.to_le_bytes())
        .chain_update(stage.as_bytes())
        .chain_update([0u8])
        .chain_update(index.to_le_bytes())
        .finalize();
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(b)
}

/// Lowercase hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
