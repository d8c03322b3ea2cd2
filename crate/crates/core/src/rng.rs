//! Seed handling. Every stochastic stage draws from a ChaCha8 stream whose seed
//! is derived from one global seed:
//!
//! `child = u64::from_le_bytes(sha256(parent.to_le_bytes() ++ stream_id)[..8])`
//!
//! so any stage can be reproduced without replaying the ones before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn derive_seed(parent: u64, stream_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(parent.to_le_bytes());
    h.update(stream_id.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn child_rng(parent: u64, stream_id: &str) -> Rng {
    rng_from_seed(derive_seed(parent, stream_id))
}

/// Fisher-Yates permutation of `0..n`.
pub fn permutation(n: usize, rng: &mut Rng) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}
