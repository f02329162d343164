//! Space-alternating l1-penalized EM for the self-regression mixture.
//!
//! Each partial step recomputes the responsibilities at the current
//! parameters and then maximizes the penalized Q-function over exactly one
//! block: all weights, one coefficient vector βₖ, or one variance σₖ².
//! Because every block update maximizes `Q − penalty` and the Kullback term
//! vanishes at the current point, the penalized objective cannot decrease
//! between partial steps (for a fixed λ).

use ndarray::{Array1, Array2};

use crate::error::{invalid, MixError, Result};
use crate::lasso::{solve_weighted_lasso, subgradient_residual, LassoSolution, WeightedLassoProblem};
use crate::model::{
    check_compatible, log_weight_matrix, penalized_objective_per_component, responsibilities, Hyperparams,
    MixtureParams, Responsibilities, SampleSet,
};
use crate::start::{default_start_variance, least_claimed_point, random_start, EMPTY_FRACTION, MAX_RESEEDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PartialStep {
    Weights,
    Beta(usize),
    Sigma(usize),
}

/// Order of the block updates within one cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleSchedule {
    order: Vec<PartialStep>,
}

impl CycleSchedule {
    /// Weights, then β₁..β_K, then σ₁²..σ_K².
    pub fn standard(k: usize) -> Self {
        let mut order = vec![PartialStep::Weights];
        order.extend((0..k).map(PartialStep::Beta));
        order.extend((0..k).map(PartialStep::Sigma));
        Self { order }
    }

    /// A custom order; must contain every block exactly once.
    pub fn new(order: Vec<PartialStep>, k: usize) -> Result<Self> {
        let mut expected = Self::standard(k).order;
        let mut got = order.clone();
        let key = |s: &PartialStep| match *s {
            PartialStep::Weights => (0, 0),
            PartialStep::Beta(k) => (1, k),
            PartialStep::Sigma(k) => (2, k),
        };
        expected.sort_by_key(key);
        got.sort_by_key(key);
        if expected != got {
            return Err(invalid(format!("cycle must update weights once and each beta/sigma block once for K = {k}")));
        }
        Ok(Self { order })
    }

    pub fn steps(&self) -> &[PartialStep] {
        &self.order
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub params: MixtureParams,
    /// Penalized objective after every partial step, starting with the initial point.
    pub objective_trace: Vec<f64>,
    /// Trace positions right after a component was re-seeded or dropped;
    /// monotonicity does not hold across these.
    pub reseed_marks: Vec<usize>,
    /// Stationarity residual of the last lasso solve for each βₖ.
    pub beta_kkt_residuals: Vec<f64>,
    pub cycles_run: usize,
    pub converged: bool,
    /// Hard labels in `0..K`.
    pub assignments: Vec<usize>,
    pub restart_index: usize,
    /// Set when a component stayed empty through every re-seed. It is then
    /// dropped (`πₖ = 0`) and the remaining components are fitted as usual,
    /// but the report counts as not converged.
    pub diagnostic: Option<String>,
}

impl FitReport {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace starts with the initial objective")
    }
}

pub fn e_step(params: &MixtureParams, sample: &SampleSet) -> Responsibilities {
    responsibilities(params, sample)
}

/// `πₖ = Σᵢ τᵢₖ / n`.
pub fn update_weights(tau: &Responsibilities) -> Array1<f64> {
    let sums = tau.column_sums();
    let total = sums.sum();
    sums / total
}

/// Coordinate-descent sweeps allowed per β-step.
pub const LASSO_MAX_SWEEPS: usize = 100_000;

fn empty_threshold(sample: &SampleSet) -> f64 {
    EMPTY_FRACTION * sample.n() as f64
}

fn checked_weight(k: usize, tau: &Responsibilities, sample: &SampleSet) -> Result<f64> {
    let s = tau.column(k).sum();
    if s < empty_threshold(sample) {
        return Err(MixError::EmptyCluster { component: Some(k), weight: s });
    }
    Ok(s)
}

/// Responsibility-weighted centroid `Yτₖ / sₖ`.
fn weighted_target(k: usize, tau: &Responsibilities, sample: &SampleSet, s: f64) -> Array1<f64> {
    sample.design().dot(&tau.column(k)) / s
}

/// Lasso step for βₖ, warm-started at the current βₖ. The returned
/// solution already includes relaxation.
pub fn update_beta(
    k: usize,
    params: &MixtureParams,
    tau: &Responsibilities,
    sample: &SampleSet,
    hp: &Hyperparams,
) -> Result<LassoSolution> {
    let s = checked_weight(k, tau, sample)?;
    let sigma2 = params.variances()[k];
    let lambda = hp.lambda.for_component(sigma2, sample);
    let target = weighted_target(k, tau, sample, s);
    let problem = WeightedLassoProblem::new(sample.design(), target, s, sigma2, lambda)?.with_gram(sample.gram());
    let mut sol = solve_weighted_lasso(&problem, params.beta(k), LASSO_MAX_SWEEPS, problem.default_tolerance())?;
    if hp.relaxation < 1.0 {
        let alpha = hp.relaxation;
        sol.beta = &sol.beta * alpha + &params.beta(k) * (1.0 - alpha);
    }
    Ok(sol)
}

/// `σₖ² = max(floor, Σᵢ τᵢₖ ‖Yᵢ − Yβₖ‖² / (d·sₖ))`, then relaxation.
pub fn update_sigma(
    k: usize,
    params: &MixtureParams,
    tau: &Responsibilities,
    sample: &SampleSet,
    hp: &Hyperparams,
) -> Result<f64> {
    let s = checked_weight(k, tau, sample)?;
    let mean = params.mean(k, sample);
    let weighted_sq: f64 = sample
        .points()
        .outer_iter()
        .zip(tau.column(k).iter())
        .map(|(y, &t)| t * y.iter().zip(mean.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    let raw = weighted_sq / (sample.d() as f64 * s);
    let floor = hp.variance_floor_for(sample);
    let target = raw.max(floor);
    let alpha = hp.relaxation;
    let v = alpha * target + (1.0 - alpha) * params.variances()[k];
    if !v.is_finite() {
        return Err(MixError::NumericalFailure(format!("variance update for component {k} is not finite")));
    }
    Ok(v.max(floor))
}

/// Parameters whose means sit on the given observations: βₖ = e_{indices[k]}.
pub fn indicator_start(sample: &SampleSet, indices: &[usize], variance: f64) -> Result<MixtureParams> {
    let k = indices.len();
    let mut betas = Array2::zeros((k, sample.n()));
    for (c, &j) in indices.iter().enumerate() {
        if j >= sample.n() {
            return Err(invalid(format!("start index {j} out of range")));
        }
        betas[[c, j]] = 1.0;
    }
    MixtureParams::new(Array1::from_elem(k, 1.0 / k as f64), betas, Array1::from_elem(k, variance))
}

fn objective(params: &MixtureParams, sample: &SampleSet, hp: &Hyperparams) -> f64 {
    penalized_objective_per_component(params, sample, &hp.lambda.per_component(params, sample))
}

fn validate_run(sample: &SampleSet, k: usize, hp: &Hyperparams) -> Result<()> {
    hp.validate()?;
    if k == 0 {
        return Err(invalid("K must be >= 1"));
    }
    if sample.n() < k {
        return Err(invalid(format!("need at least K = {k} observations, got {}", sample.n())));
    }
    Ok(())
}

/// Fits the sparse self-regression mixture.
///
/// With `init` the fit runs once from that point; otherwise `hp.restarts`
/// random indicator starts are tried and the run with the highest final
/// penalized objective wins (ties go to the earliest restart).
pub fn run(sample: &SampleSet, k: usize, hp: &Hyperparams, init: Option<&MixtureParams>) -> Result<FitReport> {
    validate_run(sample, k, hp)?;
    let floor = hp.variance_floor_for(sample);
    if let Some(p) = init {
        check_compatible(p, sample)?;
        if p.k() != k {
            return Err(invalid(format!("initial parameters have {} components, expected {k}", p.k())));
        }
        return run_from(sample, hp, p.clone(), 0);
    }
    let mut best: Option<FitReport> = None;
    for r in 0..hp.restarts {
        let start = random_start(sample, k, hp.seed, r, floor);
        let params = indicator_start(sample, &start.indices, start.variance)?;
        let report = run_from(sample, hp, params, r)?;
        let better = match &best {
            None => true,
            Some(b) => report.final_objective() > b.final_objective(),
        };
        if better {
            best = Some(report);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// One run of the cyclic schedule from `params`.
pub fn run_from(
    sample: &SampleSet,
    hp: &Hyperparams,
    mut params: MixtureParams,
    restart_index: usize,
) -> Result<FitReport> {
    let k = params.k();
    let schedule = CycleSchedule::standard(k);
    let floor = hp.variance_floor_for(sample);
    let reset_variance = default_start_variance(sample, k, floor);

    let mut trace = vec![objective(&params, sample, hp)];
    let mut reseed_marks = Vec::new();
    let mut reseeds = vec![0usize; k];
    let mut kkt = vec![f64::NAN; k];
    let mut converged = false;
    let mut diagnostic = None;
    let mut dropped = vec![false; k];
    let mut cycles_run = 0;

    while cycles_run < hp.max_cycles {
        let cycle_start = *trace.last().unwrap();
        for &step in schedule.steps() {
            let mut tau = e_step(&params, sample);
            if let PartialStep::Beta(c) | PartialStep::Sigma(c) = step {
                while !dropped[c] && tau.column(c).sum() < empty_threshold(sample) {
                    if reseeds[c] == MAX_RESEEDS {
                        diagnostic.get_or_insert(format!("component {c} stayed empty after {MAX_RESEEDS} re-seeds"));
                        dropped[c] = true;
                        drop_component(&mut params, c);
                        reseed_marks.push(trace.len());
                    } else {
                        reseeds[c] += 1;
                        let point = least_claimed_point(&tau, log_weight_matrix(&params, sample).view());
                        reseed(&mut params, c, point, reset_variance);
                        reseed_marks.push(trace.len());
                    }
                    tau = e_step(&params, sample);
                }
            }
            match step {
                PartialStep::Weights => params.set_weights(update_weights(&tau)),
                PartialStep::Beta(c) | PartialStep::Sigma(c) if dropped[c] => {}
                PartialStep::Beta(c) => {
                    let sol = update_beta(c, &params, &tau, sample, hp)?;
                    kkt[c] = sol.kkt_residual;
                    params.set_beta(c, sol.beta.view());
                }
                PartialStep::Sigma(c) => {
                    let v = update_sigma(c, &params, &tau, sample, hp)?;
                    params.set_variance(c, v);
                }
            }
            let value = objective(&params, sample, hp);
            if !value.is_finite() {
                return Err(MixError::NumericalFailure(format!("objective became {value} at {step:?}")));
            }
            trace.push(value);
        }
        cycles_run += 1;
        let end = *trace.last().unwrap();
        if (end - cycle_start).abs() <= hp.tol * (1.0 + end.abs()) {
            converged = true;
            break;
        }
    }

    let assignments = e_step(&params, sample).assignments();
    Ok(FitReport {
        params,
        objective_trace: trace,
        reseed_marks,
        beta_kkt_residuals: kkt,
        cycles_run,
        converged: converged && diagnostic.is_none(),
        assignments,
        restart_index,
        diagnostic,
    })
}

/// Sets `π_c = 0` and renormalizes; the component keeps its β and σ² but no
/// longer takes part in the fit.
fn drop_component(params: &mut MixtureParams, c: usize) {
    let mut w = params.weights().to_owned();
    w[c] = 0.0;
    let total = w.sum();
    params.set_weights(w / total);
}

fn reseed(params: &mut MixtureParams, c: usize, point: usize, variance: f64) {
    let mut beta = Array1::zeros(params.n());
    beta[point] = 1.0;
    params.set_beta(c, beta.view());
    params.set_variance(c, variance);
    let k = params.k() as f64;
    let mut w = params.weights().to_owned();
    w[c] = 1.0 / k;
    let total = w.sum();
    params.set_weights(w / total);
}

/// `∇_{βₖ} l̃(θ) = Σᵢ tᵢₖ(θ) Yᵀ(Yᵢ − Yβₖ) / σₖ²`.
pub fn mixture_beta_gradient(params: &MixtureParams, sample: &SampleSet, k: usize) -> Array1<f64> {
    let tau = responsibilities(params, sample);
    beta_gradient_with(params, sample, &tau, k)
}

fn beta_gradient_with(params: &MixtureParams, sample: &SampleSet, tau: &Responsibilities, k: usize) -> Array1<f64> {
    let gram = sample.gram();
    let t = tau.column(k);
    let s = t.sum();
    (gram.dot(&t) - gram.dot(&params.beta(k)) * s) / params.variances()[k]
}

/// Stationarity of one β-block of the penalized likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlockStationarity {
    /// `residual` is the distance from 0 to `∇_{βₖ} l̃ − λ ∂‖βₖ‖₁`; `scale` is
    /// `(sₖ/σₖ²)·max ‖Yⱼ‖²`, the natural size of that gradient.
    Residual { residual: f64, scale: f64 },
    /// `πₖ = 0`: membership constraints are active and the block is not checked.
    Degenerate,
}

impl BlockStationarity {
    pub fn relative(&self) -> Option<f64> {
        match *self {
            BlockStationarity::Residual { residual, scale } => {
                Some(if scale > 0.0 { residual / scale } else { residual })
            }
            BlockStationarity::Degenerate => None,
        }
    }
}

/// First-order optimality of every β-block at the fitted point.
pub fn theorem_stationarity_report(report: &FitReport, sample: &SampleSet, hp: &Hyperparams) -> Vec<BlockStationarity> {
    let params = &report.params;
    let tau = responsibilities(params, sample);
    let max_sq_norm = (0..sample.n()).map(|j| sample.gram()[[j, j]]).fold(0.0_f64, f64::max);
    (0..params.k())
        .map(|k| {
            if params.weights()[k] == 0.0 {
                return BlockStationarity::Degenerate;
            }
            let sigma2 = params.variances()[k];
            let lambda = hp.lambda.for_component(sigma2, sample);
            // minimization form: smooth gradient of −l̃
            let g = -beta_gradient_with(params, sample, &tau, k);
            let residual = subgradient_residual(g.view(), params.beta(k), lambda);
            let scale = tau.column(k).sum() / sigma2 * max_sq_norm;
            BlockStationarity::Residual { residual, scale }
        })
        .collect()
}
