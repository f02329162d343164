use std::path::{Path, PathBuf};

use serde::Serialize;
use sparse_mix::baseline::baseline_fit;
use sparse_mix::evaluation::Method;
use sparse_mix::sample_io::parse_dataset;
use sparse_mix::sparse_em::{self, theorem_stationarity_report, BlockStationarity};
use sparse_mix::{Hyperparams, SampleSet};

use crate::config::{hyperparams_record, HyperparamsConfig};
use crate::error::{write_error, CliError};

pub const REPORT_FILE: &str = "fit_report.toml";

#[derive(Debug, Serialize)]
pub struct FitReportFile {
    pub summary: Summary,
    pub hyperparams: HyperparamsConfig,
    /// Fitted labels, 1-based.
    pub assignments: Vec<usize>,
    pub objective_trace: Vec<f64>,
    pub components: Vec<Component>,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub input: String,
    pub method: Method,
    pub k: usize,
    pub n: usize,
    pub d: usize,
    pub converged: bool,
    pub cycles_run: usize,
    pub restart_index: usize,
    pub seed: u64,
    /// Penalized objective for the sparse method, log-likelihood for the baseline.
    pub final_objective: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct Component {
    pub index: usize,
    pub weight: f64,
    pub variance: f64,
    /// Mean in the coordinates of the input file.
    pub mean: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nonzero_coefficients: Option<usize>,
    /// Residual of the last lasso solve for this block.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lasso_kkt_residual: Option<f64>,
    /// Stationarity residual of the full penalized likelihood in this block, relative to its gradient scale.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stationarity: Option<f64>,
}

pub struct FitRequest<'a> {
    pub input: &'a Path,
    pub k: Option<usize>,
    pub method: Method,
    pub hp: Hyperparams,
    pub out: PathBuf,
}

pub fn run(req: FitRequest<'_>) -> Result<String, CliError> {
    let text = std::fs::read_to_string(req.input)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", req.input.display())))?;
    let data = parse_dataset(&text).map_err(|e| CliError::usage(format!("{}: {e}", req.input.display())))?;
    let k = req
        .k
        .or(data.k)
        .ok_or_else(|| CliError::usage("the input has no header; pass the number of components with -k"))?;
    let sample = SampleSet::new(data.points)?;
    let report = build_report(&sample, k, req.method, &req.hp, &req.input.display().to_string())?;

    std::fs::create_dir_all(&req.out).map_err(|e| write_error(&req.out, e))?;
    let path = req.out.join(REPORT_FILE);
    let body = toml::to_string(&report).map_err(|e| CliError::internal(e.to_string()))?;
    std::fs::write(&path, body).map_err(|e| write_error(&path, e))?;

    let s = &report.summary;
    Ok(format!(
        "{} K={} n={} d={} converged={} cycles={} objective={:.6} -> {}",
        s.method.tag(),
        s.k,
        s.n,
        s.d,
        s.converged,
        s.cycles_run,
        s.final_objective,
        path.display()
    ))
}

fn to_vec(v: impl IntoIterator<Item = f64>) -> Vec<f64> {
    v.into_iter().collect()
}

pub fn build_report(
    sample: &SampleSet,
    k: usize,
    method: Method,
    hp: &Hyperparams,
    input: &str,
) -> Result<FitReportFile, CliError> {
    let (summary_parts, assignments, trace, components) = match method {
        Method::Sparse => {
            let rep = sparse_em::run(sample, k, hp, None)?;
            let stationarity = theorem_stationarity_report(&rep, sample, hp);
            let means = rep.params.means(sample);
            let components = (0..k)
                .map(|c| {
                    let beta = rep.params.beta(c);
                    Component {
                        index: c + 1,
                        weight: rep.params.weights()[c],
                        variance: rep.params.variances()[c],
                        mean: to_vec(sample.uncenter(means.row(c))),
                        beta: Some(to_vec(beta.iter().copied())),
                        nonzero_coefficients: Some(beta.iter().filter(|b| **b != 0.0).count()),
                        lasso_kkt_residual: Some(rep.beta_kkt_residuals[c]).filter(|r| r.is_finite()),
                        stationarity: match stationarity[c] {
                            BlockStationarity::Degenerate => None,
                            s => s.relative(),
                        },
                    }
                })
                .collect();
            let parts =
                (rep.converged, rep.cycles_run, rep.restart_index, rep.final_objective(), rep.diagnostic.clone());
            (parts, rep.assignments, rep.objective_trace, components)
        }
        Method::Baseline => {
            let rep = baseline_fit(sample, k, hp)?;
            let components = (0..k)
                .map(|c| Component {
                    index: c + 1,
                    weight: rep.params.weights()[c],
                    variance: rep.params.variances()[c],
                    mean: to_vec(sample.uncenter(rep.params.means().row(c))),
                    beta: None,
                    nonzero_coefficients: None,
                    lasso_kkt_residual: None,
                    stationarity: None,
                })
                .collect();
            let parts = (rep.converged, rep.cycles_run, rep.restart_index, rep.final_loglik(), rep.diagnostic.clone());
            (parts, rep.assignments, rep.loglik_trace, components)
        }
    };
    let (converged, cycles_run, restart_index, final_objective, diagnostic) = summary_parts;
    Ok(FitReportFile {
        summary: Summary {
            input: input.to_string(),
            method,
            k,
            n: sample.n(),
            d: sample.d(),
            converged,
            cycles_run,
            restart_index,
            seed: hp.seed,
            final_objective,
            diagnostic,
        },
        hyperparams: hyperparams_record(hp),
        assignments: assignments.into_iter().map(|a| a + 1).collect(),
        objective_trace: trace,
        components,
    })
}
