//! Deterministic stream derivation.
//!
//! Every random quantity in the crate is drawn from a ChaCha12 stream keyed
//! by a master seed plus an integer path (e.g. `[cell, replication, draw]`).
//! Streams for distinct paths are statistically independent and the mapping
//! is stable across platforms and worker counts, so parallel schedules can
//! never change results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// splitmix64 finalizer; a well-distributed 64-bit mixing function.
#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a 64-bit subseed from a master seed and a path of indices.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut state = splitmix64(master ^ 0x4b53_445f_5345_4544); // "KSD_SEED"
    for &part in path {
        state = splitmix64(state ^ splitmix64(part));
    }
    state
}

/// Build the ChaCha12 stream for `(master, path)`.
pub fn stream(master: u64, path: &[u64]) -> ChaCha12Rng {
    let s = derive_seed(master, path);
    let mut key = [0u8; 32];
    let mut word = s;
    for chunk in key.chunks_exact_mut(8) {
        word = splitmix64(word);
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}
