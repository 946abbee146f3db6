//! Counter-style random streams.
//!
//! Every random decision in the crate draws from a stream keyed by the run
//! seed plus a tuple of tags (purpose, step, channel, candidate index, ...).
//! The stream for a given key never depends on how work is split across
//! threads, so results are reproducible for any thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags, kept distinct so streams for different jobs never collide.
pub mod tag {
    pub const INIT_PARTICLES: u64 = 0x01;
    pub const INIT_MAJORANT: u64 = 0x02;
    pub const PAIR_SELECTION: u64 = 0x03;
    pub const CANDIDATE: u64 = 0x04;
    pub const WEAK_FORM: u64 = 0x05;
    pub const POVZNER_PAIRS: u64 = 0x06;
    pub const POVZNER_HOLDOUT: u64 = 0x07;
    pub const FIT: u64 = 0x08;
    pub const COLLISION_TIME: u64 = 0x09;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent generator from `seed` and a tag tuple.
pub fn stream(seed: u64, tags: &[u64]) -> StreamRng {
    let mut h = splitmix64(seed);
    for &t in tags {
        h = splitmix64(h ^ splitmix64(t.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    let mut key = [0u8; 32];
    let mut s = h;
    for chunk in key.chunks_exact_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
