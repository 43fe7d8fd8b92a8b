//! Seed derivation for independent, reproducible random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a stream label and an index into a new seed.
pub fn derive(base: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ splitmix64(stream)).wrapping_add(index))
}

pub fn rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

pub mod streams {
    pub const TRAIN_EPISODE: u64 = 1;
    pub const EVAL_EPISODE: u64 = 2;
    pub const AGENT: u64 = 3;
    pub const INIT: u64 = 4;
    pub const OBSERVATION: u64 = 5;
    pub const RANDOM_POLICY: u64 = 6;
    pub const REPLICATION: u64 = 7;
}
