#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sparse_mix::{MixtureParams, SampleSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || scale * rng.sample::<f64, _>(StandardNormal))
}

/// Points around `k` well separated centers, returned with their labels.
pub fn clustered(rng: &mut ChaCha8Rng, n: usize, d: usize, k: usize, spread: f64) -> (SampleSet, Vec<usize>) {
    let centers = gaussian_matrix(rng, k, d, spread);
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let mut raw = gaussian_matrix(rng, n, d, 1.0);
    for (i, &l) in labels.iter().enumerate() {
        let mut row = raw.row_mut(i);
        row += &centers.row(l);
    }
    (SampleSet::new(raw).unwrap(), labels)
}

pub fn random_sample(rng: &mut ChaCha8Rng, n: usize, d: usize) -> SampleSet {
    let (s, _) = clustered(rng, n, d, 3, 4.0);
    s
}

/// Random valid parameters with moderately sized coefficients.
pub fn random_params(rng: &mut ChaCha8Rng, k: usize, n: usize, sparsity: f64) -> MixtureParams {
    let raw: Array1<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let weights = &raw / raw.sum();
    let betas = Array2::from_shape_simple_fn((k, n), || {
        if rng.random::<f64>() < sparsity {
            0.0
        } else {
            rng.random_range(-0.6..0.6)
        }
    });
    let variances = (0..k).map(|_| rng.random_range(0.5..6.0)).collect();
    MixtureParams::new(weights, betas, variances).unwrap()
}

pub fn to_na(m: &Array2<f64>) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
