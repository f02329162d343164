mod config;
mod error;
mod fit;
mod simulate;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sparse_mix::evaluation::Method;

use config::{resolve_hyperparams, resolve_out, resolve_scenario, ConfigFile, HyperparamArgs, ScenarioArgs};
use error::CliError;

/// Gaussian mixtures with sparse self-regression means: single fits and
/// Monte Carlo benchmark sweeps.
///
/// Output goes to --out, else the `out` key of the config file, else
/// $SPARSE_MIX_OUT, else ./sparse-mix-out. Exit status is 0 on success,
/// 1 on a numerical failure and 2 on bad usage or input.
#[derive(Debug, Parser)]
#[command(name = "sparse-mix", version)]
struct Cli {
    /// TOML file with the same keys as the flags; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one dataset and write fit_report.toml.
    Fit {
        /// Labeled sample file or a headerless numeric table.
        input: PathBuf,
        /// Number of components; defaults to K from the file header.
        #[arg(short, long)]
        k: Option<usize>,
        #[arg(long, default_value = "sparse")]
        method: Method,
        #[command(flatten)]
        hp: HyperparamArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write generated replicates in the labeled sample format.
    Simulate {
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 10.0)]
        dilation: f64,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo sweep over dimensions, dilations and methods.
    Sweep {
        /// Dimensions, comma separated [default: 2].
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
        /// Dilation factors, comma separated; centers fall in [-x/2, x/2]^d [default: 10,20,...,100].
        #[arg(long, value_delimiter = ',')]
        dilations: Option<Vec<f64>>,
        /// Methods, comma separated [default: sparse,baseline].
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        /// Replicates per cell [default: 200].
        #[arg(long)]
        replicates: Option<usize>,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        hp: HyperparamArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 0 uses every core.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record per-replicate wall time (the CSVs then differ between runs).
        #[arg(long)]
        timings: bool,
    },
}

fn execute(cli: Cli) -> Result<String, CliError> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Fit { input, k, method, hp, seed, out } => {
            let seed = seed.or(file.seed).unwrap_or(0);
            fit::run(fit::FitRequest {
                input: &input,
                k,
                method,
                hp: resolve_hyperparams(&hp, &file.hyperparams, seed)?,
                out: resolve_out(out, &file),
            })
        }
        Command::Simulate { dim, dilation, replicates, scenario, seed, out } => {
            simulate::run(simulate::SimulateRequest {
                dim,
                dilation,
                replicates,
                seed: seed.or(file.seed).unwrap_or(0),
                shape: resolve_scenario(&scenario, &file.scenario),
                out: resolve_out(out, &file),
            })
        }
        Command::Sweep { dims, dilations, methods, replicates, scenario, hp, seed, jobs, out, timings } => {
            let seed = seed.or(file.seed).unwrap_or(0);
            let spec = sweep::SweepSpec {
                dims: dims.or_else(|| file.sweep.dims.clone()).unwrap_or_else(|| vec![2]),
                dilations: dilations
                    .or_else(|| file.sweep.dilations.clone())
                    .unwrap_or_else(|| (1..=10).map(|i| 10.0 * i as f64).collect()),
                methods: methods
                    .or_else(|| file.sweep.methods.clone())
                    .unwrap_or_else(|| vec![Method::Sparse, Method::Baseline]),
                replicates: replicates.or(file.sweep.replicates).unwrap_or(200),
                seed,
                shape: resolve_scenario(&scenario, &file.scenario),
                hp: resolve_hyperparams(&hp, &file.hyperparams, seed)?,
                out: resolve_out(out, &file),
                jobs: jobs.or(file.jobs).unwrap_or(0),
                timings,
            };
            sweep::run(&spec)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
