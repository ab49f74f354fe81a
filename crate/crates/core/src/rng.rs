//! Seeded, reproducible randomness.
//!
//! Every stochastic component takes a [`SeededRng`]; identical seeds and
//! identical call sequences produce bit-identical outputs. Parallel work is
//! made order-independent by deriving one child seed per work item instead
//! of sharing a stream.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the seed for work item `index` under `base`. The mapping is a
/// fixed bijective mix, so results do not depend on evaluation order or on
/// how items are scheduled across threads.
pub fn child_seed(base: u64, index: u64) -> u64 {
    splitmix64(base.wrapping_add(splitmix64(index)))
}

/// Deterministic RNG wrapping ChaCha8, tagged with the seed it was built
/// from so that child streams can be derived at any time.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    spawned: u64,
    rng: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            spawned: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream for work item `index`. Independent of this stream's
    /// position; depends only on `(seed, index)`.
    pub fn child(&self, index: u64) -> SeededRng {
        SeededRng::new(child_seed(self.seed, index))
    }

    /// Sequentially numbered child stream; advances the spawn counter but
    /// not the underlying byte stream.
    pub fn next_child(&mut self) -> SeededRng {
        let c = self.child(self.spawned);
        self.spawned += 1;
        c
    }

    /// Draw a fresh base seed from this stream (for child-seeded batches).
    pub fn next_seed(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits, the usual u64 -> f64 construction.
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        use rand_distr::{Distribution, StandardNormal};
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform integer in `[0, n)`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index() requires n > 0");
        // Rejection-free modulo is fine here: n is tiny vs 2^64.
        (self.rng.next_u64() % n as u64) as usize
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}
