//! SplitMix64, the seeded generator behind every shuffle in the pipeline.
//!
//! The algorithm is fixed so that splits and batch orders can be reproduced
//! from any language:
//!
//! ```text
//! state = state + 0x9E3779B97F4A7C15            (wrapping)
//! z = state
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9      (wrapping)
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB      (wrapping)
//! return z ^ (z >> 31)
//! ```
//!
//! Bounded draws use the multiply-shift reduction `(x * n) >> 64` on a 128-bit
//! product, and [`SplitMix64::shuffle`] is the descending Fisher-Yates walk:
//! for `i` from `n - 1` down to `1`, swap `i` with `below(i + 1)`.

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// `count` distinct elements of `pool`, in draw order.
    pub fn sample<T: Clone>(&mut self, pool: &[T], count: usize) -> Vec<T> {
        let mut idx: Vec<usize> = (0..pool.len()).collect();
        let count = count.min(pool.len());
        for i in 0..count {
            let j = i + self.below(idx.len() - i);
            idx.swap(i, j);
        }
        idx[..count].iter().map(|&i| pool[i].clone()).collect()
    }
}
