//! Portable pseudo-random stream for scenario generation.
//!
//! The generator is xoshiro256** seeded from a single `u64` through
//! SplitMix64, exactly as published by Blackman and Vigna. Derived draws:
//!
//! * `uniform`: `(next_u64 >> 11) * 2^-53`, in `[0, 1)`.
//! * `normal_pair`: Box-Muller on two uniforms `u1, u2`:
//!   `r = sqrt(-2 ln(1 - u1))`, returning `(r cos 2πu2, r sin 2πu2)`.
//! * `poisson(λ)`: Knuth's product-of-uniforms method; `λ = 0` consumes
//!   one uniform and returns 0.
//!
//! Any implementation following these definitions reproduces the same
//! detection streams bit for bit (up to the platform's `ln`/`sin`/`cos`).

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

#[derive(Debug, Clone)]
pub struct SimRng(Xoshiro256StarStar);

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self(Xoshiro256StarStar::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn int_inclusive(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        lo + (self.uniform() * (hi - lo + 1) as f64) as u64
    }

    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        (r * theta.cos(), r * theta.sin())
    }

    pub fn poisson(&mut self, lambda: f64) -> u64 {
        let limit = (-lambda).exp();
        let mut k = 0;
        let mut p = self.uniform();
        while p > limit {
            k += 1;
            p *= self.uniform();
        }
        k
    }
}
