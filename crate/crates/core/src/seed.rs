//! Stable seed derivation.
//!
//! Every random stream in the crate is keyed from a root seed plus a few
//! labels. The mixing has to be identical across platforms and compiler
//! versions, so it avoids `std::hash::DefaultHasher`.

use std::hash::Hasher;

use fnv::FnvHasher;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 64-bit FNV-1a of raw bytes.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hasher = FnvHasher::default();
    hasher.write(bytes);
    hasher.finish()
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `root` and an ordered list of integer labels.
pub fn derive(root: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(mix64(root), |acc, &label| mix64(acc ^ mix64(label)))
}

/// Seed for the dropout mask of one encoding pass of one record.
pub fn dropout_seed(root: u64, record_id: &str, pass: u64) -> u64 {
    derive(root, &[fnv1a(record_id.as_bytes()), pass])
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
