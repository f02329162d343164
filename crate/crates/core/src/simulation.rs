//! Seeded generator for the Monte Carlo benchmark: a K-component spherical
//! mixture whose centers are drawn uniformly in the cube
//! `[−dilation/2, dilation/2]^d`, resampled for every replicate.

use ndarray::{Array1, Array2};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::start::{derive_seed, rng_from};

/// Identifies the generator stream; bump when sampling code changes.
pub const RNG_ALGORITHM: &str = "chacha8/splitmix-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub dim: usize,
    pub n_points: usize,
    pub weights: Vec<f64>,
    pub variances: Vec<f64>,
    pub dilation: f64,
    pub replicates: usize,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Three components with weights (.3, .2, .5), variances (5, 7, 10),
    /// ten points, 1000 replicates.
    pub fn reference(dim: usize, dilation: f64) -> Self {
        Self {
            dim,
            n_points: 10,
            weights: vec![0.3, 0.2, 0.5],
            variances: vec![5.0, 7.0, 10.0],
            dilation,
            replicates: 1000,
            seed: 0,
        }
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// Half-width of the cube the centers are drawn from.
    pub fn cube_half_width(&self) -> f64 {
        self.dilation / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.n_points == 0 {
            return Err(invalid("dimension and point count must be positive"));
        }
        if self.weights.is_empty() || self.weights.len() != self.variances.len() {
            return Err(invalid("weights and variances must be non-empty and of equal length"));
        }
        if self.weights.iter().any(|&w| !(w.is_finite() && w >= 0.0))
            || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(invalid("weights must be non-negative and sum to 1"));
        }
        if self.variances.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(invalid("variances must be finite and non-negative"));
        }
        if !(self.dilation.is_finite() && self.dilation > 0.0) {
            return Err(invalid("dilation must be positive"));
        }
        Ok(())
    }

    /// Seed of replicate `r`; depends on `(seed, dim, dilation, r)` only.
    pub fn replicate_seed(&self, r: usize) -> u64 {
        derive_seed(&[self.seed, self.dim as u64, self.dilation.to_bits(), r as u64])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    /// `n × d`
    pub points: Array2<f64>,
    /// True component of each point, in `0..K`.
    pub labels: Vec<usize>,
    /// `K × d`
    pub centers: Array2<f64>,
}

impl LabeledSample {
    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn d(&self) -> usize {
        self.points.ncols()
    }

    pub fn k(&self) -> usize {
        self.centers.nrows()
    }
}

pub fn gen_centers<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((config.k(), config.dim), || (rng.random::<f64>() - 0.5) * config.dilation)
}

pub fn gen_sample<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    centers: &Array2<f64>,
    rng: &mut R,
) -> Result<LabeledSample> {
    if centers.dim() != (config.k(), config.dim) {
        return Err(invalid("centers do not match the scenario shape"));
    }
    let picker = WeightedIndex::new(&config.weights).map_err(|e| invalid(format!("bad weights: {e}")))?;
    let mut points = Array2::zeros((config.n_points, config.dim));
    let mut labels = Vec::with_capacity(config.n_points);
    for mut row in points.outer_iter_mut() {
        let k = picker.sample(rng);
        let sd = config.variances[k].sqrt();
        for (x, c) in row.iter_mut().zip(centers.row(k).iter()) {
            let z: f64 = rng.sample(StandardNormal);
            *x = c + sd * z;
        }
        labels.push(k);
    }
    Ok(LabeledSample { points, labels, centers: centers.clone() })
}

/// Fresh centers and points for replicate `r`.
pub fn generate_replicate(config: &ScenarioConfig, r: usize) -> Result<LabeledSample> {
    config.validate()?;
    let mut rng = rng_from(config.replicate_seed(r));
    let centers = gen_centers(config, &mut rng);
    gen_sample(config, &centers, &mut rng)
}

/// FNV-1a over the bit patterns of the entries, row-major.
pub fn data_hash(points: &Array2<f64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let (n, d) = points.dim();
    for v in [n as u64, d as u64].into_iter().chain(points.iter().map(|x| x.to_bits())) {
        for byte in v.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Empirical label frequencies; handy for checking a generator.
pub fn label_frequencies(labels: &[usize], k: usize) -> Array1<f64> {
    let mut f = Array1::zeros(k);
    for &l in labels {
        f[l] += 1.0;
    }
    f / labels.len().max(1) as f64
}
