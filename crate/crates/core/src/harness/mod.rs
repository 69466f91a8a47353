//! Experiment harness: training schedules, static reference placements,
//! evaluation, summary statistics and result files.

mod evaluation;
pub mod output;
mod placement;
mod stats;
mod training;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use evaluation::{evaluate, run_episode, EpisodeResult, Policy};
pub use placement::{
    baseline_position, geometric_median, lattice_utilities, mean_distance, oracle_best_position,
    snap_to_lattice, OracleResult, WEISZFELD_MAX_ITERATIONS, WEISZFELD_TOLERANCE,
};
pub use stats::{bin_by_heterogeneity, bin_index, cdf, mean, median, sweep_table, HeterogeneityBin, SweepRow};
pub use training::{
    action_mode, checkpoint_dir, checkpoint_env, checkpoint_kind, checkpoint_points,
    load_checkpoint_learner, visit_counts, Learner, Record, TrainLogRow, TrainingRun,
};

use crate::scenario::Scenario;
use crate::{Error, Result};

/// Sweep grid, log-spaced from 10^2 to 10^4 episodes.
pub const DEFAULT_SWEEP_POINTS: [u64; 7] = [100, 200, 500, 1000, 2000, 5000, 10_000];

/// Specialisation trains on the test scenarios; generalisation on a
/// disjoint set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Spec,
    Gen,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Spec => "spec",
            Strategy::Gen => "gen",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spec" => Ok(Strategy::Spec),
            "gen" => Ok(Strategy::Gen),
            other => Err(Error::InvalidConfig(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    pub strategy: Strategy,
    pub n_train_episodes: u64,
    pub train_set_size: usize,
    pub test_set_size: usize,
    pub bin_width: f64,
    pub sweep_points: Vec<u64>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            strategy: Strategy::Spec,
            n_train_episodes: 2000,
            train_set_size: 100,
            test_set_size: 100,
            bin_width: 0.05,
            sweep_points: DEFAULT_SWEEP_POINTS.to_vec(),
        }
    }
}

impl HarnessConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.train_set_size == 0 || self.test_set_size == 0 {
            return bad("scenario sets must be non-empty".into());
        }
        if self.strategy == Strategy::Spec && self.train_set_size != self.test_set_size {
            return bad(format!(
                "spec strategy trains on the test set, so train_set_size ({}) must equal test_set_size ({})",
                self.train_set_size, self.test_set_size
            ));
        }
        if !(self.bin_width > 0.0 && self.bin_width <= 1.0) {
            return bad(format!("bin width must lie in (0, 1], got {}", self.bin_width));
        }
        if self.sweep_points.windows(2).any(|w| w[0] >= w[1]) {
            return bad("sweep points must be strictly increasing".into());
        }
        Ok(())
    }
}

/// Checks the train/test relation the strategy requires: identical sets for
/// spec, id-disjoint sets for gen.
pub fn check_sets(strategy: Strategy, train: &[Scenario], test: &[Scenario]) -> Result<()> {
    match strategy {
        Strategy::Spec => {
            if train != test {
                return Err(Error::InvalidConfig(
                    "spec strategy requires the training set to equal the test set".into(),
                ));
            }
        }
        Strategy::Gen => {
            let test_ids: BTreeSet<u64> = test.iter().map(|s| s.id).collect();
            let shared: Vec<u64> = train
                .iter()
                .map(|s| s.id)
                .filter(|id| test_ids.contains(id))
                .collect();
            if !shared.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "gen strategy requires disjoint sets; shared ids {shared:?}"
                )));
            }
        }
    }
    Ok(())
}
