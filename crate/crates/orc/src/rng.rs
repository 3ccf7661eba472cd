//! Seed derivation. Every random decision in a run flows from the run seed
//! through a named stream so that components never share or race a generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SALT_INIT: u64 = 0x01;
pub const SALT_BATCH: u64 = 0x02;
pub const SALT_MIXUP: u64 = 0x03;
pub const SALT_AUGMENT: u64 = 0x04;
pub const SALT_PRETRAIN: u64 = 0x05;

/// splitmix64 finalizer; decorrelates nearby seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent sub-seed from a run seed and a stream salt.
pub fn derive(seed: u64, salt: u64) -> u64 {
    mix(seed ^ mix(salt))
}

/// A seeded generator for the named stream.
pub fn stream(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, salt))
}
