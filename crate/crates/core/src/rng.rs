//! Injectable randomness.
//!
//! Every randomized operation takes a `&mut dyn RandomSource` so tests can
//! pin polynomial coefficients and candidate fragments with [`ScriptedRng`].

use std::collections::VecDeque;

use num_bigint::BigUint;
use num_traits::Zero;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::canonical::sha256_concat;

pub trait RandomSource {
    fn fill_bytes(&mut self, dest: &mut [u8]);

    fn next_u64(&mut self) -> u64 {
        let mut b = [0u8; 8];
        self.fill_bytes(&mut b);
        u64::from_be_bytes(b)
    }

    /// Uniform integer in `[0, bound)`; `bound` must be positive.
    fn below(&mut self, bound: &BigUint) -> BigUint {
        assert!(!bound.is_zero(), "empty sampling range");
        let bits = bound.bits();
        let len = bits.div_ceil(8) as usize;
        let excess = (len as u64 * 8 - bits) as u32;
        let mut buf = vec![0u8; len];
        loop {
            self.fill_bytes(&mut buf);
            buf[0] &= 0xffu8 >> excess;
            let v = BigUint::from_bytes_be(&buf);
            if &v < bound {
                return v;
            }
        }
    }

    fn bytes32(&mut self) -> [u8; 32] {
        let mut b = [0u8; 32];
        self.fill_bytes(&mut b);
        b
    }
}

/// ChaCha20 stream keyed by a 32-byte seed.
#[derive(Clone, Debug)]
pub struct DeterministicRng(ChaCha20Rng);

impl DeterministicRng {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        Self(ChaCha20Rng::from_seed(seed))
    }

    pub fn from_u64(seed: u64) -> Self {
        Self::derive(&[b"seed", &seed.to_be_bytes()])
    }

    /// Seeds the stream with SHA-256 over the concatenated `parts`.
    pub fn derive(parts: &[&[u8]]) -> Self {
        Self::from_seed(sha256_concat(parts))
    }
}

impl RandomSource for DeterministicRng {
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }
}

/// Returns scripted values from `below` in order, then falls back to a
/// deterministic stream. Scripted values must lie inside the requested range.
#[derive(Clone, Debug)]
pub struct ScriptedRng {
    script: VecDeque<BigUint>,
    fallback: DeterministicRng,
}

impl ScriptedRng {
    pub fn new<I, T>(values: I) -> Self
    where
        I: IntoIterator<Item = T>,
        T: Into<BigUint>,
    {
        Self {
            script: values.into_iter().map(Into::into).collect(),
            fallback: DeterministicRng::from_u64(0),
        }
    }

    pub fn remaining(&self) -> usize {
        self.script.len()
    }
}

impl RandomSource for ScriptedRng {
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.fallback.fill_bytes(dest)
    }

    fn below(&mut self, bound: &BigUint) -> BigUint {
        match self.script.pop_front() {
            Some(v) => {
                assert!(&v < bound, "scripted value {v} outside [0, {bound})");
                v
            }
            None => self.fallback.below(bound),
        }
    }
}
