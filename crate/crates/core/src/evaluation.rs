//! Class-recovery scoring and Monte Carlo aggregation.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::baseline_fit;
use crate::error::{invalid, MixError, Result};
use crate::model::{Hyperparams, SampleSet};
use crate::simulation::{data_hash, generate_replicate, LabeledSample, ScenarioConfig};
use crate::sparse_em;
use crate::start::derive_seed;

/// Largest K scored by exhaustive permutation search.
pub const MAX_PERMUTATION_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sparse,
    Baseline,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Sparse => "sparse",
            Method::Baseline => "baseline",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = MixError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(Method::Sparse),
            "baseline" => Ok(Method::Baseline),
            other => Err(invalid(format!("unknown method {other:?} (expected sparse or baseline)"))),
        }
    }
}

fn for_each_permutation(items: &mut Vec<usize>, start: usize, f: &mut impl FnMut(&[usize])) {
    if start == items.len() {
        f(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        for_each_permutation(items, start + 1, f);
        items.swap(start, i);
    }
}

/// Number of points whose fitted label matches the true label under the best
/// relabeling of the fitted classes. Labels are in `0..k`.
pub fn best_permutation_correct(assignments: &[usize], truth: &[usize], k: usize) -> Result<usize> {
    if k > MAX_PERMUTATION_K {
        return Err(MixError::Unsupported(format!("permutation scoring is limited to K <= {MAX_PERMUTATION_K}")));
    }
    if assignments.len() != truth.len() {
        return Err(invalid("assignments and truth differ in length"));
    }
    if assignments.iter().chain(truth).any(|&l| l >= k) {
        return Err(invalid(format!("label outside 0..{k}")));
    }
    let mut confusion = vec![vec![0usize; k]; k];
    for (&a, &t) in assignments.iter().zip(truth) {
        confusion[a][t] += 1;
    }
    let mut best = 0;
    let mut perm: Vec<usize> = (0..k).collect();
    for_each_permutation(&mut perm, 0, &mut |p| {
        let hits = (0..k).map(|a| confusion[a][p[a]]).sum();
        best = best.max(hits);
    });
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplicateStatus {
    Converged,
    NotConverged,
    /// The fit returned an error; scored as if every point got the same label.
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub correct: usize,
    pub status: ReplicateStatus,
    pub seconds: f64,
    pub data_hash: u64,
}

impl ReplicateRecord {
    pub fn converged(&self) -> bool {
        self.status == ReplicateStatus::Converged
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub dim: usize,
    pub dilation: f64,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub cell: Cell,
    pub per_replicate: Vec<ReplicateRecord>,
    /// Mean correct count over replicates.
    pub ancrci: f64,
}

impl McResult {
    pub fn failures(&self) -> usize {
        self.per_replicate.iter().filter(|r| matches!(r.status, ReplicateStatus::Failed(_))).count()
    }

    pub fn non_converged(&self) -> usize {
        self.per_replicate.iter().filter(|r| !r.converged()).count()
    }

    /// Sample standard deviation of the correct counts.
    pub fn std_dev(&self) -> f64 {
        let n = self.per_replicate.len();
        if n < 2 {
            return 0.0;
        }
        let ss: f64 = self.per_replicate.iter().map(|r| (r.correct as f64 - self.ancrci).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    }
}

/// Fits one labeled sample with `method` and scores it.
pub fn fit_and_score(sample: &LabeledSample, method: Method, hp: &Hyperparams) -> (usize, ReplicateStatus) {
    let k = sample.k();
    let fitted = SampleSet::new(sample.points.clone()).and_then(|set| match method {
        Method::Sparse => sparse_em::run(&set, k, hp, None).map(|r| (r.assignments, r.converged)),
        Method::Baseline => baseline_fit(&set, k, hp).map(|r| (r.assignments, r.converged)),
    });
    let (assignments, status) = match fitted {
        Ok((a, true)) => (a, ReplicateStatus::Converged),
        Ok((a, false)) => (a, ReplicateStatus::NotConverged),
        Err(e) => (vec![0; sample.n()], ReplicateStatus::Failed(e.to_string())),
    };
    let correct =
        best_permutation_correct(&assignments, &sample.labels, k).expect("labels are in range by construction");
    (correct, status)
}

/// Fit seed for a replicate; shared by all methods so paired runs start alike.
pub fn replicate_fit_seed(scenario: &ScenarioConfig, r: usize, base: u64) -> u64 {
    derive_seed(&[scenario.replicate_seed(r), base])
}

pub fn run_replicate(scenario: &ScenarioConfig, r: usize, method: Method, hp: &Hyperparams) -> Result<ReplicateRecord> {
    let sample = generate_replicate(scenario, r)?;
    let hp = Hyperparams { seed: replicate_fit_seed(scenario, r, hp.seed), ..hp.clone() };
    let started = Instant::now();
    let (correct, status) = fit_and_score(&sample, method, &hp);
    Ok(ReplicateRecord {
        replicate: r,
        correct,
        status,
        seconds: started.elapsed().as_secs_f64(),
        data_hash: data_hash(&sample.points),
    })
}

/// Runs every replicate of one (scenario, method) cell in parallel.
///
/// Records come back ordered by replicate index regardless of scheduling.
pub fn run_mc_cell(scenario: &ScenarioConfig, method: Method, hp: &Hyperparams) -> Result<McResult> {
    scenario.validate()?;
    hp.validate()?;
    if scenario.k() > MAX_PERMUTATION_K {
        return Err(MixError::Unsupported(format!("scoring supports K <= {MAX_PERMUTATION_K}")));
    }
    let per_replicate = (0..scenario.replicates)
        .into_par_iter()
        .map(|r| run_replicate(scenario, r, method, hp))
        .collect::<Result<Vec<_>>>()?;
    let ancrci = if per_replicate.is_empty() {
        0.0
    } else {
        per_replicate.iter().map(|r| r.correct as f64).sum::<f64>() / per_replicate.len() as f64
    };
    Ok(McResult { cell: Cell { dim: scenario.dim, dilation: scenario.dilation, method }, per_replicate, ancrci })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_swapped_labels() {
        let truth = [0, 0, 1, 2, 2, 1];
        assert_eq!(best_permutation_correct(&truth, &truth, 3).unwrap(), 6);
        let swapped: Vec<usize> = truth.iter().map(|&l| [1, 0, 2][l]).collect();
        assert_eq!(best_permutation_correct(&swapped, &truth, 3).unwrap(), 6);
    }

    #[test]
    fn hand_enumerated_case() {
        assert_eq!(best_permutation_correct(&[0, 0, 1, 1], &[0, 1, 0, 1], 2).unwrap(), 2);
    }

    #[test]
    fn rejects_large_k_and_bad_labels() {
        assert!(matches!(best_permutation_correct(&[0], &[0], 6), Err(MixError::Unsupported(_))));
        assert!(best_permutation_correct(&[3], &[0], 3).is_err());
        assert!(best_permutation_correct(&[0, 1], &[0], 3).is_err());
    }

    #[test]
    fn method_parsing() {
        assert_eq!("sparse".parse::<Method>().unwrap(), Method::Sparse);
        assert!("em".parse::<Method>().is_err());
    }
}
