//! Deterministic pseudo-random number generation.
//!
//! Everything stochastic in this crate (scene sampling, parameter init,
//! epoch shuffles) draws from [`SplitMix64`], a tiny counter-style generator
//! with a 64-bit state and full-period output mixing. Independent substreams
//! are derived by hashing a salt into the parent seed, which keeps unrelated
//! consumers (for example, each shelf of a scene, or each parameter tensor of
//! a network) insensitive to how many draws the others make.

/// splitmix64 generator (Sebastiano Vigna's public-domain construction).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

/// The splitmix64 output mix: a bijective scramble of a 64-bit word.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    /// Derives an independent generator from `seed` and a stream salt.
    ///
    /// The salt is scrambled before being folded in so that small consecutive
    /// salts (0, 1, 2, ...) still land in unrelated regions of the state
    /// space.
    pub fn substream(seed: u64, salt: u64) -> Self {
        SplitMix64 {
            state: seed ^ mix64(salt.wrapping_add(0x9e37_79b9_7f4a_7c15)),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        mix64(self.state)
    }

    /// Uniform draw from `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw from `[lo, hi)`. Requires `lo <= hi`.
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer draw from `[0, n)` via Lemire-style rejection,
    /// unbiased for every `n`. Requires `n > 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            let (hi, lo) = widening_mul(x, n);
            if lo >= threshold {
                return hi;
            }
        }
    }

    /// Uniform integer draw from the inclusive range `[lo, hi]`.
    pub fn range_u32(&mut self, lo: u32, hi: u32) -> u32 {
        debug_assert!(lo <= hi);
        lo + self.below((hi - lo) as u64 + 1) as u32
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            xs.swap(i, j);
        }
    }
}

#[inline]
fn widening_mul(a: u64, b: u64) -> (u64, u64) {
    let wide = (a as u128) * (b as u128);
    ((wide >> 64) as u64, wide as u64)
}
