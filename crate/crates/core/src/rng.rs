//! Counter-based pseudo-random numbers with a fixed, documented algorithm.
//!
//! All stochastic operations in this crate draw from SplitMix64
//! (Steele, Lea & Flood 2014): state advances by the 64-bit golden gamma
//! `0x9E3779B97F4A7C15` and each output is the finalizer
//! `z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27; z *= 0x94D049BB133111EB; z ^= z >> 31`.
//!
//! Substreams are derived by [`substream`], which feeds `(seed, index)`
//! through two finalizer rounds. This keys independent streams per Monte
//! Carlo sample and per vertex, so results do not depend on evaluation order
//! or thread schedule, only on `(seed, index)`. Pure integer arithmetic:
//! identical output on every platform.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// SplitMix64 sequence generator.
#[derive(Debug, Clone, Copy)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        finalize(self.state)
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    #[inline]
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Seed for substream `index` of the stream keyed by `seed`.
#[inline]
pub fn substream(seed: u64, index: u64) -> u64 {
    finalize(finalize(seed.wrapping_add(GOLDEN_GAMMA)) ^ index.wrapping_mul(GOLDEN_GAMMA))
}

/// The single uniform variate attached to `(seed, index)`; used for
/// per-vertex spin-flip decisions.
#[inline]
pub fn indexed_unit(seed: u64, index: u64) -> f64 {
    SplitMix64::new(substream(seed, index)).next_unit()
}
