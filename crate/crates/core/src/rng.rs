//! Seed streams.
//!
//! Every random quantity in the crate is drawn from a [`SeedStream`]. A stream
//! is a 64-bit seed; child streams are derived by hashing
//! `(parent seed, label, index)` with SHA-256, and the 32-byte digest seeds a
//! ChaCha8 generator. Two derivations collide only if the labels, indices and
//! parent seeds all match, so per-input resample blocks, per-trial datasets
//! and per-batch Latin hypercubes are independent and reproducible without
//! any coordination between workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SeedStream(u64);

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream(seed)
    }

    pub fn seed(self) -> u64 {
        self.0
    }

    /// Child stream for `(label, index)`.
    pub fn derive(self, label: &str, index: u64) -> SeedStream {
        let digest = self.digest(label, index);
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        SeedStream(u64::from_le_bytes(head))
    }

    /// Generator for `(label, index)`.
    pub fn rng(self, label: &str, index: u64) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.digest(label, index))
    }

    fn digest(self, label: &str, index: u64) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.0.to_le_bytes());
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
        hasher.update(index.to_le_bytes());
        let out = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&out);
        seed
    }
}
