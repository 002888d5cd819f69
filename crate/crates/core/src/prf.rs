//! Counter-based keyed hashing.
//!
//! Every random quantity that must be replayable by location (the
//! environment field `q_{t,x}`, the genealogy-mode draws `X_{t,x}^y`,
//! `K_{t,x}^y`, per-replica seeds) is a pure function of a key built here.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Incremental key: absorb words, then read the hash.
#[derive(Clone, Copy, Debug)]
pub struct Key(u64);

impl Key {
    #[inline]
    pub fn new(seed: u64, domain: u64) -> Key {
        Key(mix64(seed.wrapping_add(GOLDEN)) ^ mix64(domain ^ 0xD1B5_4A32_D192_ED03))
    }

    #[inline]
    pub fn absorb(self, word: u64) -> Key {
        Key(mix64(self.0.rotate_left(23) ^ mix64(word.wrapping_add(GOLDEN))))
    }

    #[inline]
    pub fn absorb_i64(self, word: i64) -> Key {
        self.absorb(word as u64)
    }

    #[inline]
    pub fn finish(self) -> u64 {
        mix64(self.0 ^ GOLDEN)
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn unit(self) -> f64 {
        (self.finish() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` (multiply-shift; bias below `n / 2^64`).
    #[inline]
    pub fn below(self, n: u64) -> u64 {
        ((self.finish() as u128 * n as u128) >> 64) as u64
    }
}

pub mod domain {
    pub const ENVIRONMENT: u64 = 0x45_4E56_4952_4F4E;
    pub const DIRECTION: u64 = 0x4449_5245_4354;
    pub const OFFSPRING: u64 = 0x4F46_4653_5052;
    pub const REPLICA_ENV: u64 = 0x5245_504C_454E;
    pub const REPLICA_PARTICLE: u64 = 0x5245_504C_5041;
    pub const MONTE_CARLO: u64 = 0x4D43_5749_4C4B;
}

/// Seed for replica `index` of an ensemble, one independent stream per `domain`.
pub fn derive_seed(base: u64, domain: u64, index: u64) -> u64 {
    Key::new(base, domain).absorb(index).finish()
}
