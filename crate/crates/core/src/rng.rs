//! Seed derivation. Every random stream is a ChaCha generator keyed by a
//! 64-bit value mixed from the run seed and a purpose-specific tag, so
//! results do not depend on call order or platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over the UTF-8 bytes of a tag.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(mix64(seed), |acc, &p| mix64(acc ^ mix64(p)))
}

pub fn stream(seed: u64, tag: &str, parts: &[u64]) -> Rng {
    let mut all = Vec::with_capacity(parts.len() + 1);
    all.push(hash_str(tag));
    all.extend_from_slice(parts);
    Rng::seed_from_u64(derive_seed(seed, &all))
}

/// Per-epoch shuffling seed derived from the run seed and epoch index.
pub fn epoch_seed(run_seed: u64, epoch: usize) -> u64 {
    derive_seed(run_seed, &[hash_str("epoch"), epoch as u64])
}
