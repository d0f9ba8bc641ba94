//! Splittable counter-based random streams.
//!
//! Every generated artifact in this crate is a pure function of a seed and a
//! key path: a stream is derived by mixing `(seed, k1, k2, ...)` through a
//! SplitMix64-style finalizer, so tasks, scenes and samples can be produced
//! independently (and in parallel) without sharing mutable generator state.

/// SplitMix64 finalizer. Good avalanche behaviour for key mixing.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A deterministic random stream identified by a seed and a key path.
#[derive(Debug, Clone)]
pub struct Stream {
    state: u64,
}

impl Stream {
    /// Root stream for a seed.
    pub fn new(seed: u64) -> Self {
        Stream { state: mix64(seed) }
    }

    /// Derive a child stream; children with different keys are independent,
    /// and deriving never advances `self`.
    pub fn derive(&self, key: u64) -> Stream {
        Stream {
            state: mix64(self.state ^ mix64(key.wrapping_add(0x6a09_e667_f3bc_c909))),
        }
    }

    /// Convenience for two-level keys such as (task_index, sample_index).
    pub fn derive2(&self, k1: u64, k2: u64) -> Stream {
        self.derive(k1).derive(k2)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        mix64(self.state)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        // 53 mantissa bits.
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). n must be > 0.
    pub fn below(&mut self, n: u64) -> u64 {
        // Multiply-shift; bias is negligible for desk-scale n.
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Standard normal via Box-Muller. Uses two uniforms per draw so the
    /// stream state never carries hidden cached values.
    pub fn normal(&mut self) -> f64 {
        let u1 = (self.next_f64()).max(1e-300);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            xs.swap(i, j);
        }
    }
}
