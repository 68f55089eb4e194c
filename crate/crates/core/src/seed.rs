//! Deterministic per-record RNG seeds.

use sha2::{Digest, Sha256};

/// Seed for `record_id` under `global_seed`: the first eight bytes of
/// `SHA-256(global_seed_le ‖ record_id)`, little-endian. Stable across
/// platforms and releases, unlike the std hasher.
pub fn derive_seed(global_seed: u64, record_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global_seed.to_le_bytes());
    h.update(record_id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("32-byte digest"))
}
