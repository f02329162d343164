//! Monte Carlo sweeps over (dimension × dilation × method) grids.
//!
//! Output directory layout:
//!
//! ```text
//! ancrci_<method>.csv            rows = dimensions, columns = dilations
//! replicates.csv                 one row per (cell, replicate)
//! plot/<method>_d<dim>_dil<dilation>.csv   replicate, correct
//! manifest.toml                  resolved configuration and per-cell summary
//! ```

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sparse_mix::evaluation::{run_mc_cell, McResult, Method, ReplicateStatus};
use sparse_mix::simulation::{ScenarioConfig, RNG_ALGORITHM};
use sparse_mix::Hyperparams;

use crate::config::{hyperparams_record, ConfigFile, ScenarioConfigFile, ScenarioShape, SweepConfig};
use crate::error::{write_error, CliError};

pub const LONG_FILE: &str = "replicates.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub dims: Vec<usize>,
    pub dilations: Vec<f64>,
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub seed: u64,
    pub shape: ScenarioShape,
    pub hp: Hyperparams,
    pub out: PathBuf,
    pub jobs: usize,
    /// Fill the `seconds` column; off by default so repeated runs are byte-identical.
    pub timings: bool,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.dims.is_empty() || self.dilations.is_empty() || self.methods.is_empty() {
            return Err(CliError::usage("dims, dilations and methods must be non-empty"));
        }
        if self.replicates == 0 {
            return Err(CliError::usage("replicates must be >= 1"));
        }
        for &dim in &self.dims {
            for &dilation in &self.dilations {
                self.scenario(dim, dilation).validate()?;
            }
        }
        self.hp.validate()?;
        Ok(())
    }

    fn scenario(&self, dim: usize, dilation: f64) -> ScenarioConfig {
        ScenarioConfig {
            dim,
            n_points: self.shape.n_points,
            weights: self.shape.weights.clone(),
            variances: self.shape.variances.clone(),
            dilation,
            replicates: self.replicates,
            seed: self.seed,
        }
    }

    /// The resolved spec in config-file form.
    pub fn as_config(&self) -> ConfigFile {
        ConfigFile {
            out: Some(self.out.clone()),
            jobs: Some(self.jobs),
            seed: Some(self.seed),
            hyperparams: hyperparams_record(&self.hp),
            scenario: ScenarioConfigFile {
                n_points: Some(self.shape.n_points),
                weights: Some(self.shape.weights.clone()),
                variances: Some(self.shape.variances.clone()),
            },
            sweep: SweepConfig {
                dims: Some(self.dims.clone()),
                dilations: Some(self.dilations.clone()),
                methods: Some(self.methods.clone()),
                replicates: Some(self.replicates),
            },
        }
    }
}

#[derive(Debug, Serialize)]
struct Manifest {
    run: RunInfo,
    config: ConfigFile,
    cells: Vec<CellRecord>,
}

#[derive(Debug, Serialize)]
struct RunInfo {
    software: &'static str,
    version: &'static str,
    rng_algorithm: &'static str,
    replicate_seed: &'static str,
    centers: &'static str,
    timings: bool,
}

#[derive(Debug, Serialize)]
struct CellRecord {
    dim: usize,
    dilation: f64,
    cube: String,
    method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    ancrci: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    std_dev: Option<f64>,
    non_converged: usize,
    failures: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    failure_messages: Vec<String>,
}

struct CellOutcome {
    dim: usize,
    dilation: f64,
    method: Method,
    result: Result<McResult, String>,
}

fn cube_label(dilation: f64, dim: Option<usize>) -> String {
    let h = dilation / 2.0;
    match dim {
        Some(d) => format!("[{},{}]^{d}", -h, h),
        None => format!("dilation {dilation} [{},{}]", -h, h),
    }
}

pub fn plot_file_name(method: Method, dim: usize, dilation: f64) -> String {
    format!("{}_d{dim}_dil{dilation}.csv", method.tag())
}

pub fn table_file_name(method: Method) -> String {
    format!("ancrci_{}.csv", method.tag())
}

pub fn run(spec: &SweepSpec) -> Result<String, CliError> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| CliError::internal(format!("thread pool: {e}")))?;

    let mut grid = Vec::new();
    for &dim in &spec.dims {
        for &dilation in &spec.dilations {
            for &method in &spec.methods {
                grid.push((dim, dilation, method));
            }
        }
    }
    let outcomes: Vec<CellOutcome> = pool.install(|| {
        grid.par_iter()
            .map(|&(dim, dilation, method)| CellOutcome {
                dim,
                dilation,
                method,
                result: run_mc_cell(&spec.scenario(dim, dilation), method, &spec.hp).map_err(|e| e.to_string()),
            })
            .collect()
    });

    std::fs::create_dir_all(spec.out.join("plot")).map_err(|e| write_error(&spec.out, e))?;
    for &method in &spec.methods {
        write_table(spec, method, &outcomes)?;
    }
    write_long(spec, &outcomes)?;
    for o in &outcomes {
        if let Ok(r) = &o.result {
            write_plot(&spec.out.join("plot").join(plot_file_name(o.method, o.dim, o.dilation)), r)?;
        }
    }
    write_manifest(spec, &outcomes)?;

    let failed = outcomes.iter().filter(|o| o.result.is_err()).count();
    for o in outcomes.iter().filter_map(|o| o.result.as_ref().err().map(|e| (o, e))) {
        eprintln!("cell d={} dilation={} {} failed: {}", o.0.dim, o.0.dilation, o.0.method.tag(), o.1);
    }
    Ok(format!("{} cell(s), {} failed -> {}", outcomes.len(), failed, spec.out.display()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| write_error(path, e))
}

fn write_table(spec: &SweepSpec, method: Method, outcomes: &[CellOutcome]) -> Result<(), CliError> {
    let path = spec.out.join(table_file_name(method));
    let mut w = csv_writer(&path)?;
    let mut header = vec!["dim".to_string()];
    header.extend(spec.dilations.iter().map(|&x| cube_label(x, None)));
    w.write_record(&header).map_err(|e| write_error(&path, e))?;
    for &dim in &spec.dims {
        let mut row = vec![dim.to_string()];
        for &dilation in &spec.dilations {
            let cell = outcomes
                .iter()
                .find(|o| o.dim == dim && o.dilation == dilation && o.method == method)
                .and_then(|o| o.result.as_ref().ok())
                .map(|r| format!("{:.4}", r.ancrci))
                .unwrap_or_default();
            row.push(cell);
        }
        w.write_record(&row).map_err(|e| write_error(&path, e))?;
    }
    w.flush().map_err(|e| write_error(&path, e))
}

fn write_long(spec: &SweepSpec, outcomes: &[CellOutcome]) -> Result<(), CliError> {
    let path = spec.out.join(LONG_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["dim", "dilation", "method", "replicate", "correct", "converged", "seconds", "data_hash"])
        .map_err(|e| write_error(&path, e))?;
    for o in outcomes {
        let Ok(result) = &o.result else { continue };
        for rec in &result.per_replicate {
            let seconds = if spec.timings { format!("{:.6}", rec.seconds) } else { String::new() };
            w.write_record([
                o.dim.to_string(),
                o.dilation.to_string(),
                o.method.tag().to_string(),
                rec.replicate.to_string(),
                rec.correct.to_string(),
                rec.converged().to_string(),
                seconds,
                format!("{:016x}", rec.data_hash),
            ])
            .map_err(|e| write_error(&path, e))?;
        }
    }
    w.flush().map_err(|e| write_error(&path, e))
}

fn write_plot(path: &Path, result: &McResult) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(["replicate", "correct"]).map_err(|e| write_error(path, e))?;
    for rec in &result.per_replicate {
        w.write_record([rec.replicate.to_string(), rec.correct.to_string()]).map_err(|e| write_error(path, e))?;
    }
    w.flush().map_err(|e| write_error(path, e))
}

fn write_manifest(spec: &SweepSpec, outcomes: &[CellOutcome]) -> Result<(), CliError> {
    let cells = outcomes
        .iter()
        .map(|o| {
            let mut rec = CellRecord {
                dim: o.dim,
                dilation: o.dilation,
                cube: cube_label(o.dilation, Some(o.dim)),
                method: o.method,
                ancrci: None,
                std_dev: None,
                non_converged: 0,
                failures: 0,
                error: None,
                failure_messages: Vec::new(),
            };
            match &o.result {
                Ok(r) => {
                    rec.ancrci = Some(r.ancrci);
                    rec.std_dev = Some(r.std_dev());
                    rec.non_converged = r.non_converged();
                    rec.failures = r.failures();
                    rec.failure_messages = r
                        .per_replicate
                        .iter()
                        .filter_map(|p| match &p.status {
                            ReplicateStatus::Failed(m) => Some(format!("replicate {}: {m}", p.replicate)),
                            _ => None,
                        })
                        .collect();
                }
                Err(e) => rec.error = Some(e.clone()),
            }
            rec
        })
        .collect();
    let manifest = Manifest {
        run: RunInfo {
            software: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            rng_algorithm: RNG_ALGORITHM,
            replicate_seed: "derive_seed(seed, dim, dilation, replicate)",
            centers: "resampled per replicate",
            timings: spec.timings,
        },
        config: spec.as_config(),
        cells,
    };
    let path = spec.out.join(MANIFEST_FILE);
    let body = toml::to_string(&manifest).map_err(|e| CliError::internal(e.to_string()))?;
    std::fs::write(&path, body).map_err(|e| write_error(&path, e))
}
