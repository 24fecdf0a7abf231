//! Deterministic seed derivation.
//!
//! Every stochastic component draws from a ChaCha stream seeded through
//! [`derive_seed`], so a run is a pure function of its master seed: results
//! are identical across runs, thread counts, and completion order of
//! parallel work items.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer. Standard constants; bijective on u64.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed from `(master, lane, index)`.
///
/// `lane` namespaces the purpose (population draw, disturbance stream,
/// bisection iteration, curve point); `index` enumerates work items inside
/// the lane. Chained SplitMix64 keeps distinct triples statistically
/// uncorrelated.
pub fn derive_seed(master: u64, lane: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(lane ^ splitmix64(index)))
}

/// Builds the RNG used everywhere randomness is needed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Purpose tags for [`derive_seed`] lanes. Values are arbitrary but frozen:
/// changing them changes every downstream stream.
pub mod lane {
    /// Population generation inside one trial.
    pub const POPULATION: u64 = 0x01;
    /// Disturbance draws inside one trial.
    pub const DISTURBANCE: u64 = 0x02;
    /// Batch master for one bisection iteration.
    pub const ITERATION: u64 = 0x03;
    /// One trial inside a batch.
    pub const TRIAL: u64 = 0x04;
    /// Batch master for one probability-curve point.
    pub const CURVE_POINT: u64 = 0x05;
    /// Delivery simulation after a prediction.
    pub const DELIVERY: u64 = 0x06;
    /// Endpoint-verification batches of a search.
    pub const ENDPOINT: u64 = 0x07;
    /// Positive-direction half of a two-sided search.
    pub const SEARCH_POSITIVE: u64 = 0x08;
    /// Negative-direction half of a two-sided search.
    pub const SEARCH_NEGATIVE: u64 = 0x09;
}
