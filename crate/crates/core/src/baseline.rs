//! Classic maximum-likelihood EM for spherical Gaussian mixtures (`Σₖ = σₖ²I`).
//!
//! Shares starts, variance floor, restarts, empty-component policy and the
//! stopping rule with [`crate::sparse_em`], so the two estimators differ only
//! in how the means are parametrized.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{invalid, MixError, Result};
use crate::model::{mixture_log_likelihood_from, weighted_log_densities, Hyperparams, Responsibilities, SampleSet};
use crate::start::{default_start_variance, least_claimed_point, random_start, EMPTY_FRACTION, MAX_RESEEDS};

#[derive(Debug, Clone, PartialEq)]
pub struct SphericalParams {
    weights: Array1<f64>,
    /// `K × d`, centered coordinates.
    means: Array2<f64>,
    variances: Array1<f64>,
}

impl SphericalParams {
    pub fn new(weights: Array1<f64>, means: Array2<f64>, variances: Array1<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.nrows() != k || variances.len() != k {
            return Err(invalid("inconsistent component counts in spherical parameters"));
        }
        if weights.iter().any(|&w| !(w.is_finite() && w >= 0.0)) || (weights.sum() - 1.0).abs() > 1e-12 {
            return Err(invalid("weights must be non-negative and sum to 1"));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(invalid("non-finite mean"));
        }
        if variances.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(invalid("variances must be finite and positive"));
        }
        Ok(Self { weights, means, variances })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }

    pub fn means(&self) -> ArrayView2<'_, f64> {
        self.means.view()
    }

    pub fn variances(&self) -> ArrayView1<'_, f64> {
        self.variances.view()
    }

    fn log_weights(&self, sample: &SampleSet) -> Array2<f64> {
        weighted_log_densities(sample.points(), self.weights.view(), self.means.view(), self.variances.view())
    }

    pub fn log_likelihood(&self, sample: &SampleSet) -> f64 {
        mixture_log_likelihood_from(self.log_weights(sample).view())
    }

    pub fn responsibilities(&self, sample: &SampleSet) -> Responsibilities {
        Responsibilities::from_log_weights(self.log_weights(sample).view())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineReport {
    pub params: SphericalParams,
    /// Log-likelihood after every full EM iteration, starting with the initial point.
    pub loglik_trace: Vec<f64>,
    pub reseed_marks: Vec<usize>,
    pub cycles_run: usize,
    pub converged: bool,
    pub assignments: Vec<usize>,
    pub restart_index: usize,
    pub diagnostic: Option<String>,
}

impl BaselineReport {
    pub fn final_loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace starts with the initial value")
    }
}

/// Closed-form M-step. Components below the empty threshold are reported
/// through `Err(EmptyCluster)`.
pub fn m_step(tau: &Responsibilities, sample: &SampleSet, floor: f64) -> Result<SphericalParams> {
    let k = tau.k();
    let dummy =
        SphericalParams::new(Array1::from_elem(k, 1.0 / k as f64), Array2::zeros((k, sample.d())), Array1::ones(k))?;
    m_step_with(tau, sample, floor, &dummy, &vec![false; k])
}

/// M-step that leaves `dropped` components at zero weight with their previous
/// mean and variance.
fn m_step_with(
    tau: &Responsibilities,
    sample: &SampleSet,
    floor: f64,
    previous: &SphericalParams,
    dropped: &[bool],
) -> Result<SphericalParams> {
    let sums = tau.column_sums();
    let n = sample.n() as f64;
    for (k, &s) in sums.iter().enumerate() {
        if !dropped[k] && s < EMPTY_FRACTION * n {
            return Err(MixError::EmptyCluster { component: Some(k), weight: s });
        }
    }
    let t = tau.matrix();
    let d = sample.d() as f64;
    let mut weights = sums.clone();
    let mut means = previous.means.clone();
    let mut variances = previous.variances.clone();
    for k in 0..tau.k() {
        if dropped[k] {
            weights[k] = 0.0;
            continue;
        }
        let mu = sample.points().t().dot(&t.column(k)) / sums[k];
        let ss: f64 = sample
            .points()
            .outer_iter()
            .zip(t.column(k).iter())
            .map(|(y, &w)| w * y.iter().zip(mu.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .sum();
        variances[k] = (ss / (d * sums[k])).max(floor);
        means.row_mut(k).assign(&mu);
    }
    let total = weights.sum();
    SphericalParams::new(weights / total, means, variances)
}

/// Means at the given observations, uniform weights, common variance.
pub fn point_start(sample: &SampleSet, indices: &[usize], variance: f64) -> Result<SphericalParams> {
    let k = indices.len();
    if indices.iter().any(|&j| j >= sample.n()) {
        return Err(invalid("start index out of range"));
    }
    let means = sample.points().select(Axis(0), indices);
    SphericalParams::new(Array1::from_elem(k, 1.0 / k as f64), means, Array1::from_elem(k, variance))
}

pub fn baseline_fit(sample: &SampleSet, k: usize, hp: &Hyperparams) -> Result<BaselineReport> {
    hp.validate()?;
    if k == 0 {
        return Err(invalid("K must be >= 1"));
    }
    if sample.n() < k {
        return Err(invalid(format!("need at least K = {k} observations, got {}", sample.n())));
    }
    let floor = hp.variance_floor_for(sample);
    let mut best: Option<BaselineReport> = None;
    for r in 0..hp.restarts {
        let start = random_start(sample, k, hp.seed, r, floor);
        let report = baseline_run_from(sample, hp, point_start(sample, &start.indices, start.variance)?, r)?;
        if best.as_ref().is_none_or(|b| report.final_loglik() > b.final_loglik()) {
            best = Some(report);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

pub fn baseline_run_from(
    sample: &SampleSet,
    hp: &Hyperparams,
    mut params: SphericalParams,
    restart_index: usize,
) -> Result<BaselineReport> {
    let k = params.k();
    let floor = hp.variance_floor_for(sample);
    let reset_variance = default_start_variance(sample, k, floor);
    let mut trace = vec![params.log_likelihood(sample)];
    let mut reseed_marks = Vec::new();
    let mut reseeds = vec![0usize; k];
    let mut diagnostic = None;
    let mut dropped = vec![false; k];
    let mut converged = false;
    let mut cycles_run = 0;

    while cycles_run < hp.max_cycles {
        let before = *trace.last().unwrap();
        let mut tau = params.responsibilities(sample);
        let next = loop {
            match m_step_with(&tau, sample, floor, &params, &dropped) {
                Ok(p) => break p,
                Err(MixError::EmptyCluster { component: Some(c), .. }) => {
                    if reseeds[c] == MAX_RESEEDS {
                        diagnostic.get_or_insert(format!("component {c} stayed empty after {MAX_RESEEDS} re-seeds"));
                        dropped[c] = true;
                        params.weights[c] = 0.0;
                    } else {
                        reseeds[c] += 1;
                        let point = least_claimed_point(&tau, params.log_weights(sample).view());
                        params.means.row_mut(c).assign(&sample.point(point));
                        params.variances[c] = reset_variance;
                        params.weights[c] = 1.0 / k as f64;
                    }
                    let total = params.weights.sum();
                    params.weights /= total;
                    reseed_marks.push(trace.len());
                    tau = params.responsibilities(sample);
                }
                Err(e) => return Err(e),
            }
        };
        params = next;
        let value = params.log_likelihood(sample);
        if !value.is_finite() {
            return Err(MixError::NumericalFailure(format!("log-likelihood became {value}")));
        }
        trace.push(value);
        cycles_run += 1;
        if (value - before).abs() <= hp.tol * (1.0 + value.abs()) {
            converged = true;
            break;
        }
    }

    let assignments = params.responsibilities(sample).assignments();
    Ok(BaselineReport {
        params,
        loglik_trace: trace,
        reseed_marks,
        cycles_run,
        converged: converged && diagnostic.is_none(),
        assignments,
        restart_index,
        diagnostic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn single_component_closed_form() {
        let s = SampleSet::new(array![[1.0, 2.0], [3.0, -1.0], [-2.0, 0.5], [0.0, 4.0]]).unwrap();
        let hp = Hyperparams { restarts: 1, ..Default::default() };
        let rep = baseline_fit(&s, 1, &hp).unwrap();
        assert!(rep.converged);
        assert!(rep.params.means().iter().all(|m| m.abs() < 1e-12));
        assert_abs_diff_eq!(rep.params.variances()[0], s.total_variance() / 2.0, epsilon = 1e-12);
        // one M-step reaches the fixed point; the second iteration only confirms it
        assert!(rep.cycles_run <= 2);
    }

    #[test]
    fn hard_responsibilities_give_group_means() {
        let s = SampleSet::new(array![[0.0], [2.0], [10.0], [12.0], [14.0]]).unwrap();
        let tau = Responsibilities::hard(&[0, 0, 1, 1, 1], 2).unwrap();
        let p = m_step(&tau, &s, 1e-9).unwrap();
        let off = s.center_offset()[0];
        assert_abs_diff_eq!(p.means()[[0, 0]] + off, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.means()[[1, 0]] + off, 12.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.weights()[0], 0.4, epsilon = 1e-15);
    }

    #[test]
    fn m_step_reports_empty_component() {
        let s = SampleSet::new(array![[0.0], [2.0]]).unwrap();
        let tau = Responsibilities::hard(&[0, 0], 2).unwrap();
        assert!(matches!(m_step(&tau, &s, 1e-9), Err(MixError::EmptyCluster { component: Some(1), .. })));
    }
}
