//! Deterministic random streams.
//!
//! Every stochastic routine draws from a ChaCha8 stream keyed by
//! `(master seed, purpose tag, replicate index)`. Streams for different
//! replicates never depend on the order in which they are consumed, so
//! parallel runs reproduce sequential runs bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags separating independent uses of a master seed.
pub mod tag {
    pub const REGIONS: u64 = 0x5245_4749_4f4e;
    pub const REGION_PATTERN: u64 = 0x5041_5454;
    pub const ENVELOPE: u64 = 0x454e_5645;
    pub const ENVELOPE_SIM: u64 = 0x0053_494d;
    pub const ENVELOPE_METRIC: u64 = 0x4d45_5452;
    pub const OBSERVED_METRIC: u64 = 0x4f42_5356;
    pub const CANDIDATE: u64 = 0x4341_4e44;
    pub const USER_DROP: u64 = 0x5553_4552;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed; use this to build hierarchical keys such as
/// region → simulation.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ tag) ^ index)
}

/// Opens the stream keyed by `(seed, tag, index)`.
pub fn stream(seed: u64, tag: u64, index: u64) -> StreamRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&tag.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24..].copy_from_slice(&derive_seed(seed, tag, index).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Stream for a plain seed with no further keying.
pub fn seeded(seed: u64) -> StreamRng {
    stream(seed, 0, 0)
}
