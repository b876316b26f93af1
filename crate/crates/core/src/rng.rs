//! Deterministic, splittable randomness.
//!
//! A stream is identified by `(seed, path)`. Its ChaCha key is the SHA-256
//! digest of that identity, so a substream depends only on where it sits in
//! the derivation tree and never on how many draws its parent has consumed.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    path: Vec<u64>,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::at(seed, Vec::new())
    }

    /// Stream at an explicit derivation path below `seed`.
    pub fn at(seed: u64, path: Vec<u64>) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"partial-dp/rng/v1");
        hasher.update(seed.to_le_bytes());
        hasher.update((path.len() as u64).to_le_bytes());
        for p in &path {
            hasher.update(p.to_le_bytes());
        }
        let key: [u8; 32] = hasher.finalize().into();
        RngStream {
            seed,
            path,
            rng: ChaCha12Rng::from_seed(key),
        }
    }

    pub fn substream(&self, index: u64) -> RngStream {
        let mut path = self.path.clone();
        path.push(index);
        Self::at(self.seed, path)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Uniform on the open interval (0, 1).
    pub fn open_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform integer in `0..bound`.
    pub fn below(&mut self, bound: u64) -> u64 {
        self.rng.random_range(0..bound)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
