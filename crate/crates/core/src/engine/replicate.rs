use rayon::prelude::*;

use super::scenario::Scenario;
use super::sim::{run_with, RunOptions, RunOutput};
use super::EngineError;

/// Seed of replication `index`.
pub fn replication_seed(base_seed: u64, index: usize) -> u64 {
    base_seed.wrapping_add(index as u64)
}

/// Runs every replication of `scenario` on `threads` worker threads.
/// Results come back in replication order regardless of scheduling.
pub fn replicate(scenario: &Scenario, threads: usize, options: &RunOptions) -> Result<Vec<RunOutput>, EngineError> {
    replicate_map(scenario, threads, options, |_, out| out)
}

/// Like [`replicate`], reducing each run with `reduce` as soon as it finishes
/// so full logs need not be held in memory at once.
pub fn replicate_map<T, F>(
    scenario: &Scenario,
    threads: usize,
    options: &RunOptions,
    reduce: F,
) -> Result<Vec<T>, EngineError>
where
    T: Send,
    F: Fn(usize, RunOutput) -> T + Sync,
{
    scenario.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| EngineError::Threads(e.to_string()))?;
    pool.install(|| {
        (0..scenario.replications)
            .into_par_iter()
            .map(|i| {
                let out = run_with(scenario, replication_seed(scenario.base_seed, i), options)?;
                Ok(reduce(i, out))
            })
            .collect()
    })
}
