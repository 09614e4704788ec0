//! Deterministic seed derivation: every random stream in the crate is a
//! pure function of one master seed and a few integer tags, so replicates
//! can run in any order or in parallel and still reproduce bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Collapse a master seed and tag path into one derived seed.
pub fn derive(master: u64, tags: &[u64]) -> u64 {
    let mut state = mix(master);
    for &t in tags {
        state = mix(state ^ mix(t));
    }
    state
}

/// RNG for the stream identified by `tags` under `master`.
pub fn rng(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, tags))
}
