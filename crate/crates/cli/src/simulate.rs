use std::io::BufWriter;
use std::path::PathBuf;

use sparse_mix::sample_io::write_labeled;
use sparse_mix::simulation::{generate_replicate, ScenarioConfig};

use crate::config::ScenarioShape;
use crate::error::{write_error, CliError};

pub struct SimulateRequest {
    pub dim: usize,
    pub dilation: f64,
    pub replicates: usize,
    pub seed: u64,
    pub shape: ScenarioShape,
    pub out: PathBuf,
}

pub fn replicate_file_name(r: usize) -> String {
    format!("replicate_{r:04}.txt")
}

/// Writes one labeled sample file per replicate.
pub fn run(req: SimulateRequest) -> Result<String, CliError> {
    if req.replicates == 0 {
        return Err(CliError::usage("replicates must be >= 1"));
    }
    let scenario = ScenarioConfig {
        dim: req.dim,
        n_points: req.shape.n_points,
        weights: req.shape.weights,
        variances: req.shape.variances,
        dilation: req.dilation,
        replicates: req.replicates,
        seed: req.seed,
    };
    scenario.validate()?;
    std::fs::create_dir_all(&req.out).map_err(|e| write_error(&req.out, e))?;
    for r in 0..scenario.replicates {
        let sample = generate_replicate(&scenario, r)?;
        let path = req.out.join(replicate_file_name(r));
        let file = std::fs::File::create(&path).map_err(|e| write_error(&path, e))?;
        let mut w = BufWriter::new(file);
        write_labeled(&mut w, &sample).map_err(|e| write_error(&path, e))?;
        std::io::Write::flush(&mut w).map_err(|e| write_error(&path, e))?;
    }
    let h = scenario.cube_half_width();
    Ok(format!(
        "wrote {} replicate(s), d={} dilation={} cube=[{},{}] -> {}",
        scenario.replicates,
        scenario.dim,
        scenario.dilation,
        -h,
        h,
        req.out.display()
    ))
}
