//! Sub-seed derivation.
//!
//! Every consumer of randomness takes `derive_seed(seed, "<module>")`: the
//! first eight bytes (little endian) of `SHA-256(seed_le_bytes || name)`.
//! Any module can be rerun in isolation from the single experiment seed.

use sha2::{Digest, Sha256};

pub fn derive_seed(seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
