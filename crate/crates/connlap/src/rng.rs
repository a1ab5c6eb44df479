//! Counter-based deterministic random number generation.
//!
//! Sampling, solver start vectors, and test fixtures all draw from
//! [`CounterRng`], a SplitMix64 generator driven in counter mode: output `i`
//! of stream `s` under seed `k` is `mix(k ^ (s * STREAM_SALT) + (i+1) * GAMMA)`
//! where `mix` is the SplitMix64 finalizer
//!
//! ```text
//! z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//! z ^= z >> 27; z *= 0x94D049BB133111EB;
//! z ^= z >> 31;
//! ```
//!
//! The algorithm is fully specified by these constants, so seeds reproduce
//! across implementations and languages, and independent streams (one per
//! sample index, say) can be consumed in parallel without coordination.

/// Weyl increment from SplitMix64 (golden-ratio conjugate in 64 bits).
const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
/// Salt separating sub-streams of one seed.
const STREAM_SALT: u64 = 0xA076_1D64_78BD_642F;

#[inline]
fn mix(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    z
}

/// Counter-mode SplitMix64 stream.
#[derive(Debug, Clone)]
pub struct CounterRng {
    base: u64,
    counter: u64,
}

impl CounterRng {
    /// Stream 0 of `seed`.
    pub fn new(seed: u64) -> Self {
        Self::stream(seed, 0)
    }

    /// Independent stream `stream_id` of `seed`.
    pub fn stream(seed: u64, stream_id: u64) -> Self {
        CounterRng {
            base: seed ^ stream_id.wrapping_mul(STREAM_SALT),
            counter: 0,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        mix(self.base.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    #[inline]
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via Box-Muller (consumes two uniforms).
    pub fn next_normal(&mut self) -> f64 {
        let u = (1.0 - self.next_f64()).max(f64::MIN_POSITIVE);
        let v = self.next_f64();
        (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
    }
}
