//! Deterministic random source.
//!
//! The generator is xoshiro256** (Blackman & Vigna) whose 256-bit state is
//! filled by four successive SplitMix64 outputs of the 64-bit seed. Derived
//! quantities are defined so any language can reproduce them bit for bit:
//!
//! * `next_f64` = `(next_u64 >> 11) * 2^-53`, uniform on `[0, 1)`.
//! * `normal` uses one Box-Muller draw per call with `u1 = 1 - next_f64()`
//!   (so `u1` is in `(0, 1]`) and `u2 = next_f64()`:
//!   `sqrt(-2 ln u1) * cos(2 pi u2)`. The sine half is discarded.
//! * `below(n)` is Lemire's multiply-shift with rejection.
//! * `derive(stream)` seeds a child with
//!   `splitmix64(seed ^ splitmix64(stream + 0x9E3779B97F4A7C15))`.

use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// One step of SplitMix64: advances `state` and returns the mixed output.
#[inline]
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(x: u64) -> u64 {
    let mut s = x.wrapping_sub(GOLDEN);
    splitmix64(&mut s)
}

/// Seedable xoshiro256** generator. Single owner; use [`RandomSource::derive`]
/// to hand independent streams to other components.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomSource {
    seed: u64,
    state: [u64; 4],
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let mut state = [0u64; 4];
        for s in &mut state {
            *s = splitmix64(&mut sm);
        }
        RandomSource { seed, state }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child generator for a named sub-stream.
    pub fn derive(&self, stream: u64) -> RandomSource {
        RandomSource::new(mix(self.seed ^ mix(stream.wrapping_add(GOLDEN))))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Normal draw with the given mean and standard deviation.
    pub fn gaussian(&mut self, mean: f64, std_dev: f64) -> f64 {
        mean + std_dev * self.normal()
    }

    /// Uniform integer in `0..n`. Panics when `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }

    /// Fisher-Yates shuffle, iterating from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
