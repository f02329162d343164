//! Configuration file layout and the merge of file values with flags.
//!
//! Every flag has a counterpart in the file; a flag given on the command line
//! wins over the file, the file wins over built-in defaults.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use sparse_mix::evaluation::Method;
use sparse_mix::{Hyperparams, Lambda};

use crate::error::CliError;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "SPARSE_MIX_OUT";
pub const DEFAULT_OUT: &str = "sparse-mix-out";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub hyperparams: HyperparamsConfig,
    #[serde(default)]
    pub scenario: ScenarioConfigFile,
    #[serde(default)]
    pub sweep: SweepConfig,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperparamsConfig {
    /// `"heuristic"`, `"heuristic:<scale>"`, or a number.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<LambdaValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_cycles: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance_floor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub restarts: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relaxation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaValue {
    Number(f64),
    Text(String),
}

impl LambdaValue {
    fn resolve(&self) -> Result<Lambda, CliError> {
        match self {
            LambdaValue::Number(v) => v.to_string().parse(),
            LambdaValue::Text(t) => t.parse(),
        }
        .map_err(|e| CliError::usage(format!("config: {e}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variances: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dilations: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<Method>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct HyperparamArgs {
    /// l1 weight: `heuristic`, `heuristic:<scale>` or a fixed number.
    #[arg(long)]
    pub lambda: Option<Lambda>,
    /// Budget of full update cycles.
    #[arg(long)]
    pub max_cycles: Option<usize>,
    /// Relative objective change per cycle that counts as converged.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Absolute floor on fitted variances (default: 1e-4 of the per-coordinate sample variance).
    #[arg(long)]
    pub variance_floor: Option<f64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Averaging factor in (0, 1] for β and σ² updates.
    #[arg(long)]
    pub relaxation: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ScenarioArgs {
    /// Points per replicate.
    #[arg(long)]
    pub n_points: Option<usize>,
    /// Mixture weights of the generator, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Component variances of the generator, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub variances: Option<Vec<f64>>,
}

pub fn resolve_out(flag: Option<PathBuf>, file: &ConfigFile) -> PathBuf {
    flag.or_else(|| file.out.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

pub fn resolve_hyperparams(
    flags: &HyperparamArgs,
    file: &HyperparamsConfig,
    seed: u64,
) -> Result<Hyperparams, CliError> {
    let defaults = Hyperparams::default();
    let lambda = match (flags.lambda, &file.lambda) {
        (Some(l), _) => l,
        (None, Some(v)) => v.resolve()?,
        (None, None) => defaults.lambda,
    };
    let hp = Hyperparams {
        lambda,
        max_cycles: flags.max_cycles.or(file.max_cycles).unwrap_or(defaults.max_cycles),
        tol: flags.tol.or(file.tol).unwrap_or(defaults.tol),
        variance_floor: flags.variance_floor.or(file.variance_floor).or(defaults.variance_floor),
        restarts: flags.restarts.or(file.restarts).unwrap_or(defaults.restarts),
        seed,
        relaxation: flags.relaxation.or(file.relaxation).unwrap_or(defaults.relaxation),
    };
    hp.validate()?;
    Ok(hp)
}

/// Generator settings other than dimension, dilation and replicate count.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioShape {
    pub n_points: usize,
    pub weights: Vec<f64>,
    pub variances: Vec<f64>,
}

pub fn resolve_scenario(flags: &ScenarioArgs, file: &ScenarioConfigFile) -> ScenarioShape {
    let reference = sparse_mix::simulation::ScenarioConfig::reference(2, 1.0);
    ScenarioShape {
        n_points: flags.n_points.or(file.n_points).unwrap_or(reference.n_points),
        weights: flags.weights.clone().or_else(|| file.weights.clone()).unwrap_or(reference.weights),
        variances: flags.variances.clone().or_else(|| file.variances.clone()).unwrap_or(reference.variances),
    }
}

/// File-format view of resolved hyperparameters, used in manifests and reports.
pub fn hyperparams_record(hp: &Hyperparams) -> HyperparamsConfig {
    HyperparamsConfig {
        lambda: Some(LambdaValue::Text(hp.lambda.to_string())),
        max_cycles: Some(hp.max_cycles),
        tol: Some(hp.tol),
        variance_floor: hp.variance_floor,
        restarts: Some(hp.restarts),
        relaxation: Some(hp.relaxation),
    }
}
