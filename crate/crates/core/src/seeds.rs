//! Deterministic seed fan-out.
//!
//! Every command takes one root seed; all component randomness (agent
//! training, each CVAE's init and noise, calibration rollouts, each episode
//! of each evaluation arm) draws from a named substream derived here. Two
//! runs with the same root seed are bit-identical; components can be re-run
//! independently because their substream names do not depend on execution
//! order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive the seed of a named substream from the root seed.
pub fn substream(root: u64, path: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(path.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// RNG for a named substream. ChaCha8 has a specified, portable stream, so
/// seeds mean the same thing on every platform.
pub fn rng_for(root: u64, path: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream(root, path))
}
