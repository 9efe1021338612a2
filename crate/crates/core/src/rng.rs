//! Seed derivation and the counter-based generator used for every random
//! draw in the crate.
//!
//! Draws come from ChaCha8 keyed by a 64-bit seed. Independent consumers
//! use separate ChaCha streams, so the number of values one consumer takes
//! never shifts another consumer's values. Only raw `u64` words are taken
//! from the cipher; conversion to floats and bounded integers is done here
//! so results do not depend on `rand` distribution internals.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: impl IntoIterator<Item = u8>) -> u64 {
    bytes
        .into_iter()
        .fold(FNV_OFFSET, |h, b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// FNV-1a over `global_seed` (8 bytes LE), the UTF-8 bytes of `id`, then
/// `index` (8 bytes LE).
pub fn derive_seed(global_seed: u64, id: &str, index: u64) -> u64 {
    fnv1a64(
        global_seed
            .to_le_bytes()
            .into_iter()
            .chain(id.bytes())
            .chain(index.to_le_bytes()),
    )
}

#[derive(Clone, Debug)]
pub struct CounterRng {
    inner: ChaCha8Rng,
}

impl CounterRng {
    /// Generator for `stream` under `seed`; position starts at word 0.
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        inner.set_word_pos(0);
        Self { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`; returns `lo` exactly when `lo == hi`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = self.unit();
        if lo == hi {
            lo
        } else {
            lo + (hi - lo) * u
        }
    }

    /// `true` with probability `p`; `p = 1` always fires, `p = 0` never does.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    /// Uniform integer in `0..n` by rejection sampling. `n` must be nonzero.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }

    /// Fisher-Yates, walking from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
