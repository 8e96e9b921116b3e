//! Seeded randomness.
//!
//! Every stochastic step in the crate draws from a [`ChaCha8Rng`] seeded with a
//! 64-bit value. Child seeds are derived by hashing the parent seed together
//! with a label, so the stream an entity receives does not depend on the order
//! in which entities are visited.
//!
//! Pinned contract:
//! - child seed = first 8 bytes (little-endian) of
//!   `SHA-256(parent.to_le_bytes() || label_utf8)`
//! - generator = `ChaCha8Rng::seed_from_u64(seed)`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Derives an independent child seed from `parent` and a label.
pub fn derive_seed(parent: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(parent.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut first = [0u8; 8];
    first.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(first)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Shorthand for `rng_from_seed(derive_seed(parent, label))`.
pub fn child_rng(parent: u64, label: &str) -> Rng {
    rng_from_seed(derive_seed(parent, label))
}

/// Hex SHA-256 of arbitrary bytes; used for content hashes in run directories.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
