//! Seed splitting.
//!
//! Every random stream is a ChaCha8 generator keyed by the run's root seed
//! and positioned on a stream id derived from `(domain, a, b)` by chained
//! SplitMix64 mixing. Streams with different ids never overlap, so a
//! sample's draws depend only on its own coordinates, not on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub mod domain {
    pub const SEQUENCE: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const INIT: u64 = 3;
    pub const TRAIN_BATCH: u64 = 4;
    pub const TRAIN_SAMPLE: u64 = 5;
    pub const SAMPLER: u64 = 6;
    pub const VALIDATION: u64 = 7;
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream_id(domain: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(domain) ^ a) ^ b)
}

pub fn stream(seed: u64, domain: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(domain, a, b));
    rng
}
