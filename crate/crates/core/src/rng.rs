//! Counter-based random numbers.
//!
//! Every draw is a pure function of `(seed, stream, a, b, c)`, so a value does
//! not depend on how many other values were drawn before it. The simulator
//! keys compute times by `(iteration, worker)` and mini-batch samples by
//! `(iteration, worker, slot)`, which couples the randomness of different
//! schemes run under the same seed.

/// Stream tags. Distinct tags give independent sequences for one seed.
pub mod stream {
    pub const COMPUTE_TIME: u64 = 1;
    pub const MINIBATCH: u64 = 2;
    pub const FEATURES: u64 = 3;
    pub const GROUND_TRUTH: u64 = 4;
    pub const NOISE: u64 = 5;
    pub const POWER_ITERATION: u64 = 6;
    pub const MONTE_CARLO: u64 = 7;
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A keyed generator. Cheap to copy; holds only the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    seed: u64,
}

impl CounterRng {
    pub const fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub const fn seed(&self) -> u64 {
        self.seed
    }

    /// Raw 64-bit draw for the given key.
    pub fn bits(&self, stream: u64, a: u64, b: u64, c: u64) -> u64 {
        let mut h = mix(self.seed.wrapping_add(GOLDEN));
        for word in [stream, a, b, c] {
            h = mix(h ^ word.wrapping_mul(GOLDEN).wrapping_add(0x632B_E59B_D9B4_E019));
        }
        h
    }

    /// Uniform on `(0, 1]` with 53 bits of resolution.
    pub fn uniform_open0(&self, stream: u64, a: u64, b: u64, c: u64) -> f64 {
        ((self.bits(stream, a, b, c) >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&self, n: usize, stream: u64, a: u64, b: u64, c: u64) -> usize {
        debug_assert!(n > 0);
        ((self.bits(stream, a, b, c) as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal draw (Box-Muller, cosine branch).
    pub fn standard_normal(&self, stream: u64, a: u64, b: u64) -> f64 {
        let u1 = self.uniform_open0(stream, a, b, 0);
        let u2 = self.uniform_open0(stream, a, b, 1);
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_value() {
        let rng = CounterRng::new(42);
        assert_eq!(rng.bits(1, 2, 3, 4), rng.bits(1, 2, 3, 4));
        assert_ne!(rng.bits(1, 2, 3, 4), rng.bits(1, 2, 3, 5));
        assert_ne!(rng.bits(1, 2, 3, 4), CounterRng::new(43).bits(1, 2, 3, 4));
    }

    #[test]
    fn key_positions_are_not_interchangeable() {
        let rng = CounterRng::new(0);
        assert_ne!(rng.bits(1, 2, 0, 0), rng.bits(2, 1, 0, 0));
        assert_ne!(rng.bits(0, 0, 1, 2), rng.bits(0, 0, 2, 1));
    }

    #[test]
    fn uniform_range_and_mean() {
        let rng = CounterRng::new(9);
        let n = 100_000;
        let mut sum = 0.0;
        for i in 0..n {
            let u = rng.uniform_open0(0, i, 0, 0);
            assert!(u > 0.0 && u <= 1.0);
            sum += u;
        }
        let mean = sum / n as f64;
        // sd of the mean is 1/sqrt(12 n) ~ 9.1e-4
        assert!((mean - 0.5).abs() < 4e-3, "mean {mean}");
    }

    #[test]
    fn below_stays_in_range() {
        let rng = CounterRng::new(3);
        let mut seen = [0usize; 7];
        for i in 0..7_000 {
            seen[rng.below(7, 0, i, 0, 0)] += 1;
        }
        assert!(seen.iter().all(|&c| c > 800 && c < 1200), "{seen:?}");
    }

    #[test]
    fn normal_moments() {
        let rng = CounterRng::new(5);
        let n = 100_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for i in 0..n {
            let z = rng.standard_normal(0, i, 0);
            s += z;
            s2 += z * z;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.015, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }
}
