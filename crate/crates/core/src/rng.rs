//! Portable seeded randomness.
//!
//! Generator: xoshiro256** seeded from a `u64` through SplitMix64
//! (`rand_xoshiro`'s `seed_from_u64`). Derived quantities are defined here
//! so another implementation can reproduce every stream bit-for-bit:
//!
//! * `uniform`: `(next_u64 >> 11) · 2⁻⁵³`, in `[0, 1)`.
//! * `below(n)`: `(next_u64 · n) >> 64` (128-bit multiply-shift).
//! * `normal`: Box–Muller cosine branch, `sqrt(-2 ln(1 - u1)) · cos(2π u2)`,
//!   one draw of two uniforms per normal.
//! * `shuffle`: Fisher–Yates from the back, `j = below(i + 1)`.
//! * `derive_seed(root, label)`: FNV-1a 64 of `label` xor `root`, passed
//!   through the SplitMix64 finaliser.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: Xoshiro256StarStar,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    /// Independent stream for a named component of a run.
    pub fn derived(root: u64, label: &str) -> Self {
        SeededRng::new(derive_seed(root, label))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

pub fn derive_seed(root: u64, label: &str) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = FNV_OFFSET;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix_finalize(h ^ root)
}

fn splitmix_finalize(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
