//! Keyed member hashing used for every random treatment label.
//!
//! A label is a pure function of `(seed, domain, member, iteration)`, so the
//! same member gets the same label wherever it appears, on any thread, in
//! any order, without shared state.

use xxhash_rust::xxh3::xxh3_64_with_seed;

/// Name of the pinned hash, echoed in reports for reproducibility.
pub const HASH_NAME: &str = "xxh3-64";

/// Domain tags keep the simulator's assignment, permutation labels and
/// auxiliary streams independent under a shared seed.
pub mod domain {
    pub const PERMUTATION: u64 = 0x7065_726d;
    pub const SILENT_SPLIT: u64 = 0x7369_6c6e;
    pub const SIM_ASSIGN: u64 = 0x7369_6d61;
    pub const SIM_BASELINE: u64 = 0x7369_6d62;
    pub const SIM_EXTRA: u64 = 0x7369_6d65;
}

pub fn member_hash(seed: u64, domain: u64, member: u64, iteration: u64) -> u64 {
    let mut key = [0u8; 24];
    key[..8].copy_from_slice(&domain.to_le_bytes());
    key[8..16].copy_from_slice(&member.to_le_bytes());
    key[16..].copy_from_slice(&iteration.to_le_bytes());
    xxh3_64_with_seed(&key, seed)
}

/// Maps a hash onto `[0, 1)` using its top 53 bits.
#[inline]
pub fn unit_interval(hash: u64) -> f64 {
    (hash >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Bernoulli(p) label: treated iff the hash falls below `p`. For a fixed
/// hash the label is monotone in `p`.
#[inline]
pub fn bernoulli(hash: u64, p: f64) -> bool {
    if p >= 1.0 {
        true
    } else if p <= 0.0 {
        false
    } else {
        unit_interval(hash) < p
    }
}

/// Treatment label of `member` in permutation `iteration`.
#[inline]
pub fn assign(member: u64, iteration: u64, seed: u64, p: f64) -> bool {
    bernoulli(member_hash(seed, domain::PERMUTATION, member, iteration), p)
}
