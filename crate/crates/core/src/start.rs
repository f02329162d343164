//! Pieces shared by both EM drivers: seed derivation, random starts and the
//! empty-component policy.

use ndarray::ArrayView2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{Responsibilities, SampleSet};

/// A component is treated as empty once its total responsibility drops below
/// this fraction of n.
pub const EMPTY_FRACTION: f64 = 1e-8;

/// Re-seeds allowed per component before a fit is abandoned as non-converged.
pub const MAX_RESEEDS: usize = 3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministically mixes a list of integers into one 64-bit seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x005E_ED0F_5EED_u64, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// K distinct observation indices plus the common starting variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Start {
    pub indices: Vec<usize>,
    pub variance: f64,
}

/// `total_variance / (d·K)`, never below `floor`.
pub fn default_start_variance(sample: &SampleSet, k: usize, floor: f64) -> f64 {
    (sample.total_variance() / (sample.d() * k) as f64).max(floor)
}

/// Start for restart `restart`; depends only on `(seed, restart, n, k)`.
pub fn random_start(sample: &SampleSet, k: usize, seed: u64, restart: usize, floor: f64) -> Start {
    let mut rng = rng_from(derive_seed(&[seed, restart as u64]));
    let mut indices = rand::seq::index::sample(&mut rng, sample.n(), k).into_vec();
    // keep the draw order; it fixes the component labels
    indices.truncate(k);
    Start { indices, variance: default_start_variance(sample, k, floor) }
}

/// The observation least claimed by any component: lowest max responsibility.
///
/// In high dimension nearly every row rounds to a max responsibility of
/// exactly 1, so ties are broken by the lowest best-component log weight
/// (the worst explained point), then by index.
pub fn least_claimed_point(tau: &Responsibilities, log_weights: ArrayView2<'_, f64>) -> usize {
    let key = |i: usize| {
        let t = tau.matrix().row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let l = log_weights.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (t, l)
    };
    let mut best = 0;
    let mut best_key = key(0);
    for i in 1..tau.n() {
        let k = key(i);
        if k.0 < best_key.0 || (k.0 == best_key.0 && k.1 < best_key.1) {
            best = i;
            best_key = k;
        }
    }
    best
}
