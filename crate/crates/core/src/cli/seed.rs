//! Stable seed derivation.
//!
//! A derived seed is a SplitMix64 chain over the master seed, an FNV-1a hash
//! of a string tag and any number of integer coordinates. Both primitives
//! are fixed algorithms, so seeds do not change across platforms or
//! toolchain versions.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// `seed(master, tag, parts…)`.
pub fn derive_seed(master: u64, tag: &str, parts: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    h = splitmix64(h ^ fnv1a(tag));
    for &p in parts {
        h = splitmix64(h ^ p);
    }
    h
}
