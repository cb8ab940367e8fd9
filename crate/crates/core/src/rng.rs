//! Deterministic pseudo-random numbers.
//!
//! The generator is SplitMix64: the state advances by the golden-gamma
//! constant `0x9E3779B97F4A7C15` and each output is the state passed
//! through the standard avalanche mix
//!
//! ```text
//! z = state
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! out = z ^ (z >> 31)
//! ```
//!
//! Derived streams:
//! - `next_f64` takes the top 53 bits: `(out >> 11) * 2^-53`, in `[0, 1)`.
//! - `below(n)` rejects outputs in the biased tail, then takes `out % n`.
//! - `normal()` is Box–Muller on two uniforms, returning the cosine branch only.
//!
//! A run seed `s` derives its sub-streams by fixed offsets: initialization
//! uses `s`, mini-batch shuffling `s + 1` and data generation `s + 2`
//! (all wrapping).

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub const INIT_OFFSET: u64 = 0;
pub const SHUFFLE_OFFSET: u64 = 1;
pub const DATA_OFFSET: u64 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn for_init(seed: u64) -> Self {
        Self::new(seed.wrapping_add(INIT_OFFSET))
    }

    pub fn for_shuffle(seed: u64) -> Self {
        Self::new(seed.wrapping_add(SHUFFLE_OFFSET))
    }

    pub fn for_data(seed: u64) -> Self {
        Self::new(seed.wrapping_add(DATA_OFFSET))
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Independent child generator seeded from this stream.
    pub fn split(&mut self) -> Rng {
        Rng::new(self.next_u64())
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)`. `n` must be nonzero.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    pub fn normal(&mut self) -> f64 {
        // 1 - u keeps the log argument in (0, 1].
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Fisher–Yates, walking from the last index down.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// `k` distinct indices from `[0, n)` in draw order.
    pub fn choose_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}
