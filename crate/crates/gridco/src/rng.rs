//! Seed management: all randomness in a run flows from one config seed,
//! split into named streams so that adding draws to one subsystem does not
//! shift any other subsystem's sequence.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Deterministic stream RNG for `(seed, name)`.
pub fn stream(seed: u64, name: &str) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let h = fnv1a(name.as_bytes());
    key[8..16].copy_from_slice(&h.to_le_bytes());
    // mix so that nearby seeds do not share prefixes
    let mixed = splitmix(seed ^ h);
    key[16..24].copy_from_slice(&mixed.to_le_bytes());
    key[24..32].copy_from_slice(&splitmix(mixed).to_le_bytes());
    ChaCha12Rng::from_seed(key)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
