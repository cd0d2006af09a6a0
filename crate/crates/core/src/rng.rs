//! Seeded, platform-independent random streams for weight initialization.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// FNV-1a over bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Independent stream for one named parameter, so values do not depend on
/// the order in which parameters are generated.
pub fn param_stream(seed: u64, name: &str) -> ParamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a64(name.as_bytes()));
    ParamRng(rng)
}

pub struct ParamRng(ChaCha8Rng);

impl ParamRng {
    /// Uniform in `[0, 1)` with 24 bits of resolution.
    pub fn unit(&mut self) -> f64 {
        (self.0.next_u32() >> 8) as f64 * (1.0 / (1u32 << 24) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }
}
