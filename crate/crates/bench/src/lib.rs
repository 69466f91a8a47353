//! Shared fixtures for the benchmarks.

use fapnet_core::scenario::generate_set;
use fapnet_core::{EnvConfig, Scenario};

/// Master seed of every benchmark fixture.
pub const SEED: u64 = 1;

/// First `count` scenarios of the default test set.
pub fn scenarios(count: usize) -> Vec<Scenario> {
    let cfg = EnvConfig::default();
    generate_set(SEED, 0, count, &cfg.area, 3, 40e6).expect("default area is valid")
}

/// Default environment with a shorter episode.
pub fn short_env(horizon: usize) -> EnvConfig {
    EnvConfig {
        horizon,
        ..EnvConfig::default()
    }
}
