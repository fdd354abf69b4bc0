//! Deterministic seed derivation.
//!
//! Every random stream in a run is keyed by a tuple such as
//! `(run_seed, worker_index, episode_index)` so that draws never depend on
//! scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a key tuple.
pub fn derive(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x243f_6a88_85a3_08d3, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Hash of a string label, for keying streams by name.
pub fn label(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn rng(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(parts))
}

/// Stream tags keep the different consumers of a run seed apart.
pub mod tags {
    pub const EPISODE: u64 = 1;
    pub const ACTIONS: u64 = 2;
    pub const EVAL: u64 = 3;
    pub const INIT: u64 = 4;
    pub const TRACE: u64 = 5;
}
