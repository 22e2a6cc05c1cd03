//! Seeded, splittable random streams.
//!
//! Every stochastic stage of the pipeline receives its own [`Rng`] derived
//! from one top-level seed by labeled splitting, so results never depend on
//! the order in which stages or workers consume randomness.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

/// A deterministic random stream identified by its 64-bit seed.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha12Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// FNV-1a; stable across processes and platforms, unlike std's hasher.
fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream keyed by `label`. Independent of how much of `self` has
    /// been consumed.
    pub fn split(&self, label: &str) -> Rng {
        Rng::new(splitmix64(self.seed ^ splitmix64(label_hash(label))))
    }

    /// Child stream keyed by `label` and an index, for per-worker or
    /// per-draw streams.
    pub fn split_index(&self, label: &str, index: u64) -> Rng {
        let base = splitmix64(self.seed ^ splitmix64(label_hash(label)));
        Rng::new(splitmix64(base ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D))))
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = StandardNormal.sample(&mut self.inner);
        }
    }

    /// Consumes one value of this stream to seed a derived stream.
    pub fn next_seed(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Index in `0..n` (n > 0).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "empty range");
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// `n` iid standard-normal variates.
pub fn standard_normal(rng: &mut Rng, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    rng.fill_standard_normal(&mut out);
    out
}
