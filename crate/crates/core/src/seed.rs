//! Derived random streams.
//!
//! Every stochastic draw in the toolkit is keyed by `(base seed, purpose,
//! label, index)`. Streams are therefore independent of evaluation order and
//! of each other: adding a new draw site never shifts an existing stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Hash a draw-site key down to a 64-bit seed.
pub fn derive_seed(base: u64, purpose: &str, label: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update((purpose.len() as u64).to_le_bytes());
    hasher.update(purpose.as_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}

/// A ChaCha8 generator seeded from a derived key.
pub fn derived_rng(base: u64, purpose: &str, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, purpose, label, index))
}
