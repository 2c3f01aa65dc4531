//! Reproducible random streams keyed by a seed and an index path.
//!
//! Every stream is a ChaCha8 generator whose key is derived from
//! `(seed, path...)` with SplitMix64, so stream contents depend only on the
//! key and never on which worker thread drew from it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for the stream identified by `seed` and `path`.
pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    let mut state = seed;
    let mut acc = splitmix64(&mut state);
    for &p in path {
        state ^= p.wrapping_mul(0xD1B5_4A32_D192_ED03).wrapping_add(acc);
        acc = splitmix64(&mut state);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Folds `path` into a single derived seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    use rand::RngCore;
    stream(seed, path).next_u64()
}
