//! Reproducible random substreams.
//!
//! Every trial of every repetition draws from its own ChaCha8 stream keyed by
//! `(seed, repetition, trial)`, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Trial index reserved for the per-repetition parameter draw.
pub const PARAMETER_STREAM: u64 = u64::MAX;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for one `(seed, repetition, trial)` coordinate.
pub fn substream(seed: u64, repetition: u64, trial: u64) -> ChaCha8Rng {
    let words = [
        splitmix64(seed),
        splitmix64(repetition ^ 0x5851_f42d_4c95_7f2d),
        splitmix64(trial ^ 0x1405_7b7e_f767_814f),
        splitmix64(seed ^ repetition.rotate_left(21) ^ trial.rotate_left(43)),
    ];
    let mut key = [0u8; 32];
    for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
