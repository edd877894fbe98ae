//! Multi-threaded versions of dataset generation and rollouts. Both produce
//! exactly what their sequential counterparts produce: every trajectory or
//! episode owns a random stream keyed by its index, and results are
//! collected in index order.

use missmdp_core::eval::{evaluation_horizon, run_episode, summarize, Episode, RolloutConfig, RolloutStats};
use missmdp_core::model::{MissMdp, MissingnessTable};
use missmdp_core::plan::AlphaPolicy;
use missmdp_core::simulate::{dataset_horizon, indexed_trajectory, BehaviorPolicy, Dataset, History};
use rayon::prelude::*;

use crate::error::Result;

/// Same output as `missmdp_core::simulate::generate_dataset`.
pub fn generate_dataset(
    model: &MissMdp,
    table: &MissingnessTable,
    policy: BehaviorPolicy,
    size: usize,
    seed: u64,
) -> Result<Dataset> {
    if size == 0 {
        return Err(missmdp_core::Error::InvalidArgument("dataset size must be at least 1".into()).into());
    }
    if model.initial().is_empty() {
        return Err(missmdp_core::Error::InvalidModel("empty initial distribution".into()).into());
    }
    let horizon = dataset_horizon(model)?;
    let mut data = Dataset::default();
    let mut next = 0u64;
    let workers = rayon::current_num_threads().max(1);
    while data.total_observations() < size {
        // Enough trajectories for the remaining observations if all ran to the horizon.
        let remaining = size - data.total_observations();
        let batch = (remaining.div_ceil(horizon)).max(workers) as u64;
        let histories: Vec<History> = (next..next + batch)
            .into_par_iter()
            .map(|i| indexed_trajectory(model, table, policy, horizon, seed, i))
            .collect();
        next += batch;
        for h in histories {
            if data.total_observations() >= size {
                break;
            }
            data.push(h);
        }
    }
    Ok(data)
}

/// Same output as `missmdp_core::eval::rollout_value`.
pub fn rollout_value(
    model: &MissMdp,
    truth: &MissingnessTable,
    tracker: &MissingnessTable,
    policy: &AlphaPolicy,
    config: &RolloutConfig,
) -> Result<RolloutStats> {
    if config.episodes == 0 {
        return Err(missmdp_core::Error::InvalidArgument("at least one episode is required".into()).into());
    }
    let horizon = match config.horizon {
        Some(h) => h,
        None => evaluation_horizon(model)?,
    };
    let episodes: Vec<Episode> = (0..config.episodes as u64)
        .into_par_iter()
        .map(|i| run_episode(model, truth, tracker, policy, horizon, config.ignorable, config.seed, i))
        .collect();
    Ok(summarize(&episodes))
}
