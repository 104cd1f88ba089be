//! Counter-based seed derivation.
//!
//! Every random stream in the pipeline (per-run subsamples, per-run forests,
//! per-tree bootstraps) is seeded by hashing the master seed together with a
//! path of stream identifiers. Streams therefore never depend on the order in
//! which work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random generator used everywhere in the crate. ChaCha output is stable
/// across platforms and crate versions.
pub type StreamRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub const fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a hash of a stream label, usable in constants.
pub const fn tag(label: &str) -> u64 {
    let bytes = label.as_bytes();
    let mut hash = 0xCBF2_9CE4_8422_2325u64;
    let mut i = 0;
    while i < bytes.len() {
        hash ^= bytes[i] as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
        i += 1;
    }
    hash
}

/// Stream labels.
pub mod tags {
    use super::tag;

    pub const SUBSAMPLE: u64 = tag("subsample");
    pub const FOREST: u64 = tag("forest");
    pub const TREE: u64 = tag("tree");
    pub const CELL: u64 = tag("sweep-cell");
    pub const SYNTHETIC: u64 = tag("synthetic");
    pub const DESIGN: u64 = tag("initial-design");
    pub const ACQUISITION: u64 = tag("acquisition");
}

/// Derives a child seed from `seed` and a path of stream identifiers.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    let mut state = mix(seed.wrapping_add(GOLDEN_GAMMA));
    for (depth, &id) in path.iter().enumerate() {
        let salted = id.wrapping_add(GOLDEN_GAMMA.wrapping_mul(depth as u64 + 2));
        state = mix(state ^ mix(salted));
    }
    state
}

pub fn rng_from(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}
