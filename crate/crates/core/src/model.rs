//! Data and parameter types for the self-regression mixture, together with
//! the objective functions evaluated by the fitting drivers.
//!
//! The model is a K-component spherical Gaussian mixture
//!
//! ```text
//! p(y) = Σₖ πₖ (2πσₖ²)^(-d/2) exp(-‖y - Yβₖ‖² / 2σₖ²)
//! ```
//!
//! whose means are constrained to the span of the (centered) observations,
//! `μₖ = Yβₖ` with `Y = [Y₁, …, Yₙ]`. All densities are handled in log space.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use std::f64::consts::PI;

use crate::error::{invalid, MixError, Result};

const CENTERING_TOL: f64 = 1e-10;
const WEIGHT_SUM_TOL: f64 = 1e-12;
const ROW_SUM_TOL: f64 = 1e-10;

/// Centered observations, stored one observation per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    points: Array2<f64>,
    center_offset: Array1<f64>,
    gram: Array2<f64>,
}

impl SampleSet {
    /// Centers `raw` (one observation per row) and keeps the subtracted mean.
    pub fn new(raw: Array2<f64>) -> Result<Self> {
        let (n, d) = raw.dim();
        if n == 0 || d == 0 {
            return Err(invalid(format!("sample set needs n >= 1 and d >= 1, got {n}x{d}")));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(invalid("sample set contains non-finite values"));
        }
        let offset = raw.mean_axis(Axis(0)).expect("n >= 1");
        let mut points = raw;
        points -= &offset;
        // one more pass removes the rounding residue of the first subtraction
        let residue = points.mean_axis(Axis(0)).expect("n >= 1");
        points -= &residue;
        let offset = offset + residue;
        debug_assert!(points
            .mean_axis(Axis(0))
            .unwrap()
            .iter()
            .all(|m| m.abs() <= CENTERING_TOL * (1.0 + offset.iter().fold(0.0_f64, |a, b| a.max(b.abs())))));
        let gram = points.dot(&points.t());
        Ok(Self { points, center_offset: offset, gram })
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn d(&self) -> usize {
        self.points.ncols()
    }

    /// Centered observations, `n × d`.
    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }

    /// The regression design `Y` as a `d × n` matrix whose columns are the observations.
    pub fn design(&self) -> ArrayView2<'_, f64> {
        self.points.t()
    }

    pub fn center_offset(&self) -> ArrayView1<'_, f64> {
        self.center_offset.view()
    }

    /// Inner products `⟨Yᵢ, Yⱼ⟩`.
    pub fn gram(&self) -> ArrayView2<'_, f64> {
        self.gram.view()
    }

    /// `Yβ`, a point in the centered coordinates.
    pub fn combine(&self, beta: ArrayView1<'_, f64>) -> Array1<f64> {
        assert_eq!(beta.len(), self.n(), "coefficient vector must have length n");
        self.points.t().dot(&beta)
    }

    /// Maps a centered-coordinate vector back to the caller's original coordinates.
    pub fn uncenter(&self, v: ArrayView1<'_, f64>) -> Array1<f64> {
        &v + &self.center_offset
    }

    /// Trace of the sample covariance (divisor n).
    pub fn total_variance(&self) -> f64 {
        self.points.iter().map(|v| v * v).sum::<f64>() / self.n() as f64
    }

    /// Default lower bound on fitted variances: `1e-4 · total_variance / d`.
    pub fn default_variance_floor(&self) -> f64 {
        let per_coord = self.total_variance() / self.d() as f64;
        if per_coord > 0.0 {
            1e-4 * per_coord
        } else {
            1e-12
        }
    }
}

/// `θ = (π, β, σ²)`. Means are always derived as `Yβₖ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    weights: Array1<f64>,
    /// Row k holds βₖ.
    betas: Array2<f64>,
    variances: Array1<f64>,
}

impl MixtureParams {
    pub fn new(weights: Array1<f64>, betas: Array2<f64>, variances: Array1<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(invalid("mixture needs at least one component"));
        }
        if betas.nrows() != k || variances.len() != k {
            return Err(invalid(format!(
                "component count mismatch: {} weights, {} betas, {} variances",
                k,
                betas.nrows(),
                variances.len()
            )));
        }
        validate_weights(weights.view())?;
        if betas.iter().any(|b| !b.is_finite()) {
            return Err(invalid("non-finite regression coefficient"));
        }
        if variances.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(invalid("variances must be finite and positive"));
        }
        Ok(Self { weights, betas, variances })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn n(&self) -> usize {
        self.betas.ncols()
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }

    pub fn betas(&self) -> ArrayView2<'_, f64> {
        self.betas.view()
    }

    pub fn beta(&self, k: usize) -> ArrayView1<'_, f64> {
        self.betas.row(k)
    }

    pub fn variances(&self) -> ArrayView1<'_, f64> {
        self.variances.view()
    }

    pub fn mean(&self, k: usize, y: &SampleSet) -> Array1<f64> {
        y.combine(self.beta(k))
    }

    /// Means as a `K × d` matrix, in centered coordinates.
    pub fn means(&self, y: &SampleSet) -> Array2<f64> {
        self.betas.dot(&y.points())
    }

    pub fn l1_norms(&self) -> Array1<f64> {
        self.betas.map_axis(Axis(1), |b| b.iter().map(|v| v.abs()).sum())
    }

    pub(crate) fn set_weights(&mut self, weights: Array1<f64>) {
        debug_assert_eq!(weights.len(), self.k());
        self.weights = weights;
    }

    pub(crate) fn set_beta(&mut self, k: usize, beta: ArrayView1<'_, f64>) {
        self.betas.row_mut(k).assign(&beta);
    }

    pub(crate) fn set_variance(&mut self, k: usize, v: f64) {
        self.variances[k] = v;
    }

    /// Applies a component relabeling: new component `j` is old component `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.k());
        let weights = perm.iter().map(|&p| self.weights[p]).collect();
        let variances = perm.iter().map(|&p| self.variances[p]).collect();
        let betas = self.betas.select(Axis(0), perm);
        Self { weights, betas, variances }
    }
}

fn validate_weights(w: ArrayView1<'_, f64>) -> Result<()> {
    if w.iter().any(|&p| !(p.is_finite() && p >= 0.0)) {
        return Err(invalid("mixture weights must be finite and non-negative"));
    }
    let total: f64 = w.sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(invalid(format!("mixture weights sum to {total}, expected 1")));
    }
    Ok(())
}

/// Posterior membership probabilities, `n × K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    tau: Array2<f64>,
}

impl Responsibilities {
    pub fn new(tau: Array2<f64>) -> Result<Self> {
        if tau.nrows() == 0 || tau.ncols() == 0 {
            return Err(invalid("empty responsibility matrix"));
        }
        if tau.iter().any(|&t| !(t.is_finite() && (0.0..=1.0).contains(&t))) {
            return Err(invalid("responsibilities must lie in [0, 1]"));
        }
        for (i, row) in tau.axis_iter(Axis(0)).enumerate() {
            let s = row.sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(invalid(format!("responsibility row {i} sums to {s}")));
            }
        }
        Ok(Self { tau })
    }

    /// Normalizes each row of unnormalized log weights with a per-row max shift.
    pub fn from_log_weights(log_weights: ArrayView2<'_, f64>) -> Self {
        let mut tau = log_weights.to_owned();
        for mut row in tau.axis_iter_mut(Axis(0)) {
            let lse = log_sum_exp(row.view());
            assert!(lse.is_finite(), "row has no finite log weight");
            row.mapv_inplace(|v| (v - lse).exp());
            let s = row.sum();
            row /= s;
        }
        Self { tau }
    }

    /// One-hot rows from hard labels in `0..k`.
    pub fn hard(labels: &[usize], k: usize) -> Result<Self> {
        let mut tau = Array2::zeros((labels.len(), k));
        for (i, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(invalid(format!("label {l} out of range for {k} components")));
            }
            tau[[i, l]] = 1.0;
        }
        Self::new(tau)
    }

    pub fn n(&self) -> usize {
        self.tau.nrows()
    }

    pub fn k(&self) -> usize {
        self.tau.ncols()
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.tau.view()
    }

    pub fn column(&self, k: usize) -> ArrayView1<'_, f64> {
        self.tau.column(k)
    }

    /// `sₖ = Σᵢ τᵢₖ` for every component.
    pub fn column_sums(&self) -> Array1<f64> {
        self.tau.sum_axis(Axis(0))
    }

    /// Hard labels: argmax per row, ties to the lowest index.
    pub fn assignments(&self) -> Vec<usize> {
        self.tau
            .axis_iter(Axis(0))
            .map(|row| {
                let mut best = 0;
                for (k, &t) in row.iter().enumerate() {
                    if t > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }
}

/// Penalty weight for the l1 term.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Lambda {
    /// One λ shared by every component.
    Fixed(f64),
    /// Per-component universal threshold `λₖ = scale · √(2 log n) · ρ / σₖ`,
    /// with ρ the root-mean-square norm of the centered observations.
    ///
    /// This is `σₖ √(2 log n) · ρ`, the usual lasso threshold for the
    /// least-squares scale `½‖m − Yβ‖²`, divided by σₖ² to match the
    /// likelihood scale of the β-subproblem.
    Heuristic(f64),
}

impl Lambda {
    pub fn for_component(&self, sigma2: f64, sample: &SampleSet) -> f64 {
        match *self {
            Lambda::Fixed(l) => l,
            Lambda::Heuristic(scale) => {
                let log_term = (2.0 * (sample.n().max(2) as f64).ln()).sqrt();
                scale * log_term * sample.total_variance().sqrt() / sigma2.sqrt()
            }
        }
    }

    pub fn per_component(&self, params: &MixtureParams, sample: &SampleSet) -> Vec<f64> {
        params.variances().iter().map(|&s| self.for_component(s, sample)).collect()
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, Lambda::Fixed(_))
    }
}

/// `heuristic`, `heuristic:<scale>` or a plain number for a fixed λ.
impl std::str::FromStr for Lambda {
    type Err = MixError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let number = |t: &str| t.trim().parse::<f64>().map_err(|_| invalid(format!("bad lambda {s:?}")));
        let lambda = match s.strip_prefix("heuristic") {
            Some("") => Lambda::Heuristic(1.0),
            Some(rest) => match rest.strip_prefix(':') {
                Some(scale) => Lambda::Heuristic(number(scale)?),
                None => return Err(invalid(format!("bad lambda {s:?}"))),
            },
            None => Lambda::Fixed(number(s)?),
        };
        match lambda {
            Lambda::Fixed(l) | Lambda::Heuristic(l) if !(l.is_finite() && l >= 0.0) => {
                Err(invalid(format!("lambda must be finite and >= 0, got {s:?}")))
            }
            ok => Ok(ok),
        }
    }
}

impl std::fmt::Display for Lambda {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Lambda::Fixed(l) => write!(f, "{l:?}"),
            Lambda::Heuristic(scale) => write!(f, "heuristic:{scale:?}"),
        }
    }
}

impl Default for Lambda {
    fn default() -> Self {
        Lambda::Heuristic(1.0)
    }
}

/// Tuning knobs shared by both EM drivers.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub lambda: Lambda,
    /// Budget of full cycles.
    pub max_cycles: usize,
    /// Relative change of the objective over one full cycle that counts as converged.
    pub tol: f64,
    /// Absolute floor on σ²; `None` uses [`SampleSet::default_variance_floor`].
    pub variance_floor: Option<f64>,
    pub restarts: usize,
    pub seed: u64,
    /// Averaging factor α ∈ (0, 1] applied to β and σ² updates; 1 disables averaging.
    pub relaxation: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            lambda: Lambda::default(),
            max_cycles: 500,
            tol: 1e-8,
            variance_floor: None,
            restarts: 5,
            seed: 0,
            relaxation: 1.0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        match self.lambda {
            Lambda::Fixed(l) | Lambda::Heuristic(l) if !(l.is_finite() && l >= 0.0) => {
                return Err(invalid(format!("lambda must be finite and >= 0, got {l}")));
            }
            _ => {}
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(invalid(format!("tol must be > 0, got {}", self.tol)));
        }
        if let Some(f) = self.variance_floor {
            if !(f.is_finite() && f > 0.0) {
                return Err(invalid(format!("variance floor must be > 0, got {f}")));
            }
        }
        if self.max_cycles == 0 {
            return Err(invalid("max_cycles must be >= 1"));
        }
        if self.restarts == 0 {
            return Err(invalid("restarts must be >= 1"));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(invalid(format!("relaxation must lie in (0, 1], got {}", self.relaxation)));
        }
        Ok(())
    }

    pub fn variance_floor_for(&self, y: &SampleSet) -> f64 {
        self.variance_floor.unwrap_or_else(|| y.default_variance_floor())
    }
}

pub fn log_sum_exp(values: ArrayView1<'_, f64>) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Log density of `N(mean, sigma2 · I)` at `y`.
pub fn spherical_log_density(y: ArrayView1<'_, f64>, mean: ArrayView1<'_, f64>, sigma2: f64) -> f64 {
    let d = y.len() as f64;
    let sq: f64 = y.iter().zip(mean.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    -0.5 * d * (2.0 * PI * sigma2).ln() - sq / (2.0 * sigma2)
}

/// Log density of component `(β, σ²)` at `y`, with mean `Yβ`.
pub fn component_log_density(
    y: ArrayView1<'_, f64>,
    beta: ArrayView1<'_, f64>,
    sigma2: f64,
    sample: &SampleSet,
) -> Result<f64> {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(invalid(format!("sigma2 must be finite and positive, got {sigma2}")));
    }
    if y.len() != sample.d() || beta.len() != sample.n() {
        return Err(invalid("dimension mismatch in component density"));
    }
    if y.iter().chain(beta.iter()).any(|v| !v.is_finite()) {
        return Err(invalid("non-finite input to component density"));
    }
    let mean = sample.combine(beta);
    Ok(spherical_log_density(y, mean.view(), sigma2))
}

/// `log πₖ + log φₖ(Yᵢ)` for every observation and component, `n × K`.
///
/// `means` is `K × d`. A zero weight gives `-∞` in its column.
pub fn weighted_log_densities(
    points: ArrayView2<'_, f64>,
    weights: ArrayView1<'_, f64>,
    means: ArrayView2<'_, f64>,
    variances: ArrayView1<'_, f64>,
) -> Array2<f64> {
    let (n, k) = (points.nrows(), weights.len());
    let mut out = Array2::zeros((n, k));
    for c in 0..k {
        let log_w = weights[c].ln();
        let mean = means.row(c);
        for i in 0..n {
            out[[i, c]] = log_w + spherical_log_density(points.row(i), mean, variances[c]);
        }
    }
    out
}

/// `log πₖ + log φ(Yᵢ; Yβₖ, σₖ²I)`, `n × K`.
pub fn log_weight_matrix(params: &MixtureParams, sample: &SampleSet) -> Array2<f64> {
    assert_eq!(params.n(), sample.n(), "coefficient length must match the sample size");
    let means = params.means(sample);
    weighted_log_densities(sample.points(), params.weights(), means.view(), params.variances())
}

pub(crate) fn mixture_log_likelihood_from(log_weights: ArrayView2<'_, f64>) -> f64 {
    log_weights.axis_iter(Axis(0)).map(log_sum_exp).sum()
}

/// `l̃(θ) = Σᵢ log Σₖ πₖ φ(Yᵢ; Yβₖ, σₖ²I)`.
pub fn self_regression_log_likelihood(params: &MixtureParams, sample: &SampleSet) -> f64 {
    mixture_log_likelihood_from(log_weight_matrix(params, sample).view())
}

/// `l̃(θ) − λ Σₖ ‖βₖ‖₁`.
pub fn penalized_objective(params: &MixtureParams, sample: &SampleSet, lambda: f64) -> f64 {
    self_regression_log_likelihood(params, sample) - lambda * params.l1_norms().sum()
}

/// Penalized objective with one λ per component.
pub fn penalized_objective_per_component(params: &MixtureParams, sample: &SampleSet, lambdas: &[f64]) -> f64 {
    assert_eq!(lambdas.len(), params.k());
    let penalty: f64 = params.l1_norms().iter().zip(lambdas).map(|(b, l)| b * l).sum();
    self_regression_log_likelihood(params, sample) - penalty
}

/// Posterior membership `tᵢₖ(θ)`.
pub fn responsibilities(params: &MixtureParams, sample: &SampleSet) -> Responsibilities {
    Responsibilities::from_log_weights(log_weight_matrix(params, sample).view())
}

/// `Q(θ, τ) = Σᵢ Σₖ τᵢₖ log(πₖ φₖ(Yᵢ) / τᵢₖ)`: the expected complete-data
/// log-likelihood plus the entropy of `τ`.
///
/// With `τ = t(θ̄)` this is `l̃(θ) − I_y(θ, θ̄)`. The entropy term does not
/// depend on `θ`, so maximizing over any block is unaffected by it. Terms
/// with `τᵢₖ = 0` contribute nothing. Returns `-∞` when some `πₖ = 0` carries
/// positive responsibility.
pub fn q_function(params: &MixtureParams, tau: &Responsibilities, sample: &SampleSet) -> f64 {
    assert_eq!(tau.k(), params.k());
    assert_eq!(tau.n(), sample.n());
    let lw = log_weight_matrix(params, sample);
    let mut total = 0.0;
    for (t, l) in tau.matrix().iter().zip(lw.iter()) {
        if *t > 0.0 {
            if *l == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            total += t * (l - t.ln());
        }
    }
    total
}

/// `I_y(θ, θ̄) = Σᵢ Σₖ tᵢₖ(θ̄) log(tᵢₖ(θ̄) / tᵢₖ(θ))`, the divergence between
/// the membership posteriors at `θ̄` and `θ`.
///
/// Returns `+∞` when `tᵢₖ(θ) = 0` where `tᵢₖ(θ̄) > 0`.
pub fn kullback_penalty(theta: &MixtureParams, theta_bar: &MixtureParams, sample: &SampleSet) -> f64 {
    let lw = log_weight_matrix(theta, sample);
    let lw_bar = log_weight_matrix(theta_bar, sample);
    let mut total = 0.0;
    for (row, row_bar) in lw.axis_iter(Axis(0)).zip(lw_bar.axis_iter(Axis(0))) {
        let lse = log_sum_exp(row);
        let lse_bar = log_sum_exp(row_bar);
        for (l, lb) in row.iter().zip(row_bar.iter()) {
            let log_t_bar = lb - lse_bar;
            let t_bar = log_t_bar.exp();
            if t_bar == 0.0 {
                continue;
            }
            let log_t = l - lse;
            if log_t == f64::NEG_INFINITY {
                return f64::INFINITY;
            }
            total += t_bar * (log_t_bar - log_t);
        }
    }
    // the exact value is non-negative; clip rounding noise around zero
    total.max(0.0)
}

/// Fails with [`MixError::InvalidArgument`] unless `params` fits `sample`.
pub(crate) fn check_compatible(params: &MixtureParams, sample: &SampleSet) -> Result<()> {
    if params.n() != sample.n() {
        return Err(MixError::InvalidArgument(format!(
            "parameters carry {} coefficients per component but the sample has {} points",
            params.n(),
            sample.n()
        )));
    }
    Ok(())
}
