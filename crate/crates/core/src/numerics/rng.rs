use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::NumericsError;

/// Seeded random stream. ChaCha8 gives the same stream on every platform.
#[derive(Clone, Debug)]
pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn seed_from(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Independent child stream for `(seed, stream, index)`.
    pub fn derived(seed: u64, stream: u64, index: u64) -> Self {
        Self::seed_from(derive_seed(seed, stream, index))
    }

    pub fn uniform(&mut self) -> f64 {
        self.0.gen::<f64>()
    }

    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.0.gen_range(0..n)
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.gen()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// SplitMix64 finalizer over the combined inputs.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform `k`-subset of `0..population`, returned in ascending order.
pub fn sample_without_replacement(rng: &mut Rng, population: usize, k: usize) -> Result<Vec<usize>, NumericsError> {
    if k > population {
        return Err(NumericsError::SampleTooLarge { k, population });
    }
    // Partial Fisher-Yates over the first k slots.
    let mut pool: Vec<usize> = (0..population).collect();
    for i in 0..k {
        let j = i + rng.below(population - i);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool.sort_unstable();
    Ok(pool)
}
