//! Independent scenario runs on a bounded worker pool.

use std::path::PathBuf;

use rayon::prelude::*;

use crate::config::validate_config;
use crate::error::{RunError, RunResult};
use crate::run::{run_scenario, RunManifest};

#[derive(Debug, Clone, PartialEq)]
pub struct BatchJob {
    pub config: PathBuf,
    pub out: PathBuf,
    /// Overrides the scenario seed.
    pub seed: Option<u64>,
}

/// Validates and runs one job in the calling thread.
pub fn run_job(job: &BatchJob) -> RunResult<RunManifest> {
    let scenario = validate_config(&job.config).map_err(|d| {
        RunError::Invalid(d.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))
    })?;
    let seed = job.seed.unwrap_or(scenario.seed);
    run_scenario(&scenario, &job.out, seed)
}

/// Runs every job with at most `jobs` concurrent workers; results keep input order.
pub fn run_batch(batch: &[BatchJob], jobs: usize) -> RunResult<Vec<RunResult<RunManifest>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| RunError::Invalid(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| batch.par_iter().map(run_job).collect()))
}
