//! Fixtures shared by the benchmarks.

use nfbt_core::config::ExperimentConfig;
use nfbt_core::gnn::{Aggregation, GnnModel};
use nfbt_core::seed;
use nfbt_core::{Result, Scenario};

/// Desk profile with a fixed seed.
pub fn desk() -> ExperimentConfig {
    ExperimentConfig { seed: 7, ..ExperimentConfig::desk() }
}

pub fn scenario(cfg: &ExperimentConfig) -> Result<Scenario> {
    nfbt_core::scenario::generate_scenario(&cfg.geometry()?, &cfg.scenario_config(cfg.num_users)?, cfg.seed)
}

/// An untrained model of the configured shape; inference cost does not
/// depend on the weights.
pub fn untrained_model(cfg: &ExperimentConfig) -> Result<GnnModel> {
    GnnModel::new(cfg.model_shape(), Aggregation::Mean, &mut seed::rng(cfg.seed, seed::stream::TRAIN_INIT))
}
