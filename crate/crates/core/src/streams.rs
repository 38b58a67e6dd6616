//! Counter-based random substreams.
//!
//! Every unit of work (a neutron trial, a campaign cycle, a dataset point)
//! draws from its own generator keyed by `(seed, domain, index)`. The output
//! of a run is therefore a pure function of the seed, whatever the thread
//! count or chunking.

use rand::rand_core::{impls, RngCore};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Key domains, so that the same seed used by two simulations does not
/// produce correlated streams.
pub mod domain {
    pub const QUANTUM_TRIALS: u64 = 0x5155_414E_5455_4D00;
    pub const STOCHASTIC_TRIALS: u64 = 0x5354_4F43_4841_5300;
    pub const CAMPAIGN_CYCLES: u64 = 0x4359_434C_4553_0000;
    pub const DATASET_POINTS: u64 = 0x4441_5441_5345_5400;
}

/// SplitMix64 finaliser; a bijection on u64 with full avalanche.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed; used to hand one seed per item to a nested simulation.
pub fn derive_seed(seed: u64, domain: u64, index: u64) -> u64 {
    mix64(mix64(mix64(seed) ^ domain).wrapping_add(index.wrapping_mul(GOLDEN_GAMMA)))
}

/// SplitMix64 generator started at a key derived from `(seed, domain, index)`.
#[derive(Debug, Clone)]
pub struct Substream {
    state: u64,
}

impl Substream {
    #[inline]
    pub fn new(seed: u64, domain: u64, index: u64) -> Self {
        Self {
            state: derive_seed(seed, domain, index),
        }
    }

    /// Uniform double in [0, 1) with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for Substream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        impls::fill_bytes_via_next(self, dst)
    }
}
