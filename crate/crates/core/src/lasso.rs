//! Weighted l1-penalized least squares by cyclic coordinate descent.
//!
//! Minimizes
//!
//! ```text
//! F(β) = (s / 2σ²) ‖m − Yβ‖² + λ‖β‖₁
//! ```
//!
//! which is, up to a constant, the negated β-block of the penalized
//! Q-function for one mixture component with `m = Yτ/s` and `s = Σᵢ τᵢ`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{invalid, MixError, Result};

/// Below this total responsibility a component counts as empty.
pub const MIN_TOTAL_WEIGHT: f64 = 1e-12;

/// `sign(z) · max(|z| − γ, 0)`.
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    debug_assert!(gamma >= 0.0);
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct WeightedLassoProblem<'a> {
    /// `d × n`, one column per observation.
    design: ArrayView2<'a, f64>,
    target: Array1<f64>,
    total_weight: f64,
    sigma2: f64,
    lambda: f64,
    gram: Option<ArrayView2<'a, f64>>,
}

impl<'a> WeightedLassoProblem<'a> {
    pub fn new(
        design: ArrayView2<'a, f64>,
        target: Array1<f64>,
        total_weight: f64,
        sigma2: f64,
        lambda: f64,
    ) -> Result<Self> {
        if target.len() != design.nrows() {
            return Err(invalid(format!(
                "target has length {} but the design has {} rows",
                target.len(),
                design.nrows()
            )));
        }
        if !(total_weight.is_finite() && total_weight >= 0.0) {
            return Err(invalid(format!("total weight must be finite and >= 0, got {total_weight}")));
        }
        if total_weight < MIN_TOTAL_WEIGHT {
            return Err(MixError::EmptyCluster { component: None, weight: total_weight });
        }
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(invalid(format!("sigma2 must be finite and > 0, got {sigma2}")));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(invalid(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        if target.iter().chain(design.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("non-finite entry in lasso data"));
        }
        Ok(Self { design, target, total_weight, sigma2, lambda, gram: None })
    }

    /// Supplies a precomputed `YᵀY` so the solver does not rebuild it.
    pub fn with_gram(mut self, gram: ArrayView2<'a, f64>) -> Self {
        let n = self.design.ncols();
        assert_eq!(gram.dim(), (n, n), "gram matrix must be n x n");
        self.gram = Some(gram);
        self
    }

    pub fn n(&self) -> usize {
        self.design.ncols()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn design(&self) -> ArrayView2<'a, f64> {
        self.design
    }

    pub fn target(&self) -> ArrayView1<'_, f64> {
        self.target.view()
    }

    /// `s / σ²`, the curvature multiplier of the smooth part.
    pub fn curvature(&self) -> f64 {
        self.total_weight / self.sigma2
    }

    /// Gradient of the smooth part, `−(s/σ²) Yᵀ(m − Yβ)`.
    pub fn smooth_gradient(&self, beta: ArrayView1<'_, f64>) -> Array1<f64> {
        let residual = &self.target - &self.design.dot(&beta);
        self.design.t().dot(&residual) * (-self.curvature())
    }

    pub fn objective(&self, beta: ArrayView1<'_, f64>) -> f64 {
        let residual = &self.target - &self.design.dot(&beta);
        let sq: f64 = residual.iter().map(|r| r * r).sum();
        0.5 * self.curvature() * sq + self.lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// Smallest λ for which β = 0 is a minimizer: `(s/σ²) ‖Yᵀm‖∞`.
    pub fn critical_lambda(&self) -> f64 {
        let corr = self.design.t().dot(&self.target);
        self.curvature() * corr.iter().fold(0.0_f64, |a, c| a.max(c.abs()))
    }

    /// Scale used to turn a relative tolerance into an absolute residual bound:
    /// `(s/σ²) · ‖m‖ · max column norm`.
    pub fn residual_scale(&self) -> f64 {
        let target_norm = self.target.dot(&self.target).sqrt();
        let max_col = self.design.columns().into_iter().map(|c| c.dot(&c).sqrt()).fold(0.0_f64, f64::max);
        self.curvature() * target_norm * max_col
    }

    /// `1e-8 · residual_scale`, the default stopping residual.
    pub fn default_tolerance(&self) -> f64 {
        1e-8 * self.residual_scale().max(f64::MIN_POSITIVE)
    }

    fn gram(&self) -> Array2<f64> {
        match self.gram {
            Some(g) => g.to_owned(),
            None => self.design.t().dot(&self.design),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub beta: Array1<f64>,
    pub kkt_residual: f64,
    /// Full coordinate sweeps performed.
    pub iterations: usize,
    pub converged: bool,
}

/// Objective and stationarity residual after one sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub objective: f64,
    pub kkt_residual: f64,
}

/// Stationarity violation of `F` at `beta`: per coordinate,
/// `|gⱼ + λ sign βⱼ|` off zero and `max(|gⱼ| − λ, 0)` at zero; the max over coordinates.
pub fn kkt_residual(problem: &WeightedLassoProblem<'_>, beta: ArrayView1<'_, f64>) -> f64 {
    let g = problem.smooth_gradient(beta);
    subgradient_residual(g.view(), beta, problem.lambda)
}

/// Shared residual formula for a smooth gradient `g` of a function being minimized
/// plus `λ‖β‖₁`.
pub(crate) fn subgradient_residual(g: ArrayView1<'_, f64>, beta: ArrayView1<'_, f64>, lambda: f64) -> f64 {
    g.iter()
        .zip(beta.iter())
        .map(|(&gj, &bj)| if bj != 0.0 { (gj + lambda * bj.signum()).abs() } else { (gj.abs() - lambda).max(0.0) })
        .fold(0.0, f64::max)
}

pub fn solve_weighted_lasso(
    problem: &WeightedLassoProblem<'_>,
    beta_init: ArrayView1<'_, f64>,
    max_iters: usize,
    tol: f64,
) -> Result<LassoSolution> {
    CoordinateDescent::new(problem, beta_init)?.run(max_iters, tol, None)
}

/// Same as [`solve_weighted_lasso`] but also returns one record per sweep.
pub fn solve_weighted_lasso_traced(
    problem: &WeightedLassoProblem<'_>,
    beta_init: ArrayView1<'_, f64>,
    max_iters: usize,
    tol: f64,
) -> Result<(LassoSolution, Vec<SweepRecord>)> {
    let mut trace = Vec::new();
    let sol = CoordinateDescent::new(problem, beta_init)?.run(max_iters, tol, Some(&mut trace))?;
    Ok((sol, trace))
}

struct CoordinateDescent<'p, 'a> {
    problem: &'p WeightedLassoProblem<'a>,
    gram: Array2<f64>,
    /// `Yᵀm`
    corr: Array1<f64>,
    beta: Array1<f64>,
    /// `Gβ`, refreshed after every sweep.
    g_beta: Array1<f64>,
    active: Vec<bool>,
}

impl<'p, 'a> CoordinateDescent<'p, 'a> {
    fn new(problem: &'p WeightedLassoProblem<'a>, beta_init: ArrayView1<'_, f64>) -> Result<Self> {
        let n = problem.n();
        if beta_init.len() != n {
            return Err(invalid(format!("initial beta has length {} instead of {n}", beta_init.len())));
        }
        if beta_init.iter().any(|b| !b.is_finite()) {
            return Err(invalid("initial beta is not finite"));
        }
        let gram = problem.gram();
        let max_diag = (0..n).map(|j| gram[[j, j]]).fold(0.0_f64, f64::max);
        let active: Vec<bool> = (0..n).map(|j| gram[[j, j]] > 1e-24 * max_diag.max(f64::MIN_POSITIVE)).collect();
        let mut beta = beta_init.to_owned();
        for (b, &a) in beta.iter_mut().zip(&active) {
            if !a {
                *b = 0.0;
            }
        }
        let corr = problem.design.t().dot(&problem.target);
        let g_beta = gram.dot(&beta);
        Ok(Self { problem, gram, corr, beta, g_beta, active })
    }

    fn residual(&self) -> f64 {
        let a = self.problem.curvature();
        let g = (&self.g_beta - &self.corr) * a;
        subgradient_residual(g.view(), self.beta.view(), self.problem.lambda)
    }

    fn sweep(&mut self) {
        let a = self.problem.curvature();
        let lambda = self.problem.lambda;
        for j in 0..self.beta.len() {
            if !self.active[j] {
                continue;
            }
            // off-diagonal part of (Gβ)ⱼ, exactly 0 when every other coefficient is 0
            let others: f64 = self
                .gram
                .row(j)
                .iter()
                .zip(&self.beta)
                .enumerate()
                .filter(|&(k, (_, &b))| k != j && b != 0.0)
                .map(|(_, (g, b))| g * b)
                .sum();
            let z = a * (self.corr[j] - others);
            let new = soft_threshold(z, lambda) / (a * self.gram[[j, j]]);
            self.beta[j] = new;
        }
        self.g_beta = self.gram.dot(&self.beta);
    }

    fn run(mut self, max_iters: usize, tol: f64, mut trace: Option<&mut Vec<SweepRecord>>) -> Result<LassoSolution> {
        let mut residual = self.residual();
        let mut iterations = 0;
        while residual > tol && iterations < max_iters {
            self.sweep();
            iterations += 1;
            residual = self.residual();
            if !residual.is_finite() || self.beta.iter().any(|b| !b.is_finite()) {
                return Err(MixError::NumericalFailure(format!(
                    "coordinate descent diverged after {iterations} sweeps"
                )));
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(SweepRecord { objective: self.problem.objective(self.beta.view()), kkt_residual: residual });
            }
        }
        Ok(LassoSolution { beta: self.beta, kkt_residual: residual, iterations, converged: residual <= tol })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        for z in [-2.5, 0.0, 1e-9, 7.0] {
            assert_eq!(soft_threshold(z, 0.0), z);
        }
    }

    #[test]
    fn orthonormal_design_without_penalty_projects() {
        let design = Array2::eye(3);
        let m = array![0.4, -1.2, 2.0];
        let p = WeightedLassoProblem::new(design.view(), m.clone(), 2.0, 2.0, 0.0).unwrap();
        let sol = solve_weighted_lasso(&p, Array1::zeros(3).view(), 30, 1e-12).unwrap();
        assert!(sol.converged);
        for j in 0..3 {
            assert_abs_diff_eq!(sol.beta[j], m[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn above_critical_lambda_returns_exact_zero() {
        let design = array![[1.0, 0.5, -0.3], [0.2, -1.0, 0.7]];
        let m = array![0.9, -0.4];
        let probe = WeightedLassoProblem::new(design.view(), m.clone(), 3.0, 1.5, 0.0).unwrap();
        let lam = probe.critical_lambda() * 1.0001;
        let p = WeightedLassoProblem::new(design.view(), m, 3.0, 1.5, lam).unwrap();
        let sol = solve_weighted_lasso(&p, array![1.0, -2.0, 0.5].view(), 1000, 1e-12).unwrap();
        assert!(sol.beta.iter().all(|&b| b == 0.0), "{:?}", sol.beta);
        assert_eq!(kkt_residual(&p, Array1::zeros(3).view()), 0.0);
    }

    #[test]
    fn empty_cluster_error() {
        let design = Array2::eye(2);
        let err = WeightedLassoProblem::new(design.view(), array![1.0, 1.0], 0.0, 1.0, 0.1).unwrap_err();
        assert!(matches!(err, MixError::EmptyCluster { .. }));
    }

    #[test]
    fn zero_columns_forced_to_zero() {
        let design = array![[1.0, 0.0], [0.0, 0.0]];
        let p = WeightedLassoProblem::new(design.view(), array![2.0, 0.0], 1.0, 1.0, 0.0).unwrap();
        let sol = solve_weighted_lasso(&p, array![0.0, 5.0].view(), 10, 1e-12).unwrap();
        assert_eq!(sol.beta[1], 0.0);
        assert_abs_diff_eq!(sol.beta[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn sweeps_never_increase_objective() {
        let design = array![[1.0, 0.9, -0.3, 0.2], [0.4, 0.5, 1.1, -0.8], [0.0, 0.3, 0.2, 0.9]];
        let m = array![1.5, -0.2, 0.7];
        let p = WeightedLassoProblem::new(design.view(), m, 2.5, 0.8, 0.3).unwrap();
        let init = array![0.5, -0.5, 0.5, -0.5];
        let (sol, trace) = solve_weighted_lasso_traced(&p, init.view(), 500, 1e-12).unwrap();
        assert!(sol.converged);
        let mut prev = p.objective(init.view());
        for rec in &trace {
            assert!(rec.objective <= prev + 1e-12 * (1.0 + prev.abs()));
            prev = rec.objective;
        }
        assert!(trace.first().unwrap().kkt_residual > trace.last().unwrap().kkt_residual);
    }

    #[test]
    fn gram_shortcut_matches() {
        let design = array![[1.0, 0.9, -0.3], [0.4, 0.5, 1.1]];
        let gram = design.t().dot(&design);
        let m = array![0.3, -0.7];
        let a = WeightedLassoProblem::new(design.view(), m.clone(), 1.0, 1.0, 0.05).unwrap();
        let b = a.clone().with_gram(gram.view());
        let sa = solve_weighted_lasso(&a, Array1::zeros(3).view(), 200, 1e-12).unwrap();
        let sb = solve_weighted_lasso(&b, Array1::zeros(3).view(), 200, 1e-12).unwrap();
        assert_eq!(sa, sb);
    }
}
