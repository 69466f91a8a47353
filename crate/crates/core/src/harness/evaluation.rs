use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::placement::{baseline_position, oracle_best_position};
use crate::agents::{DdpgAgent, DdqnAgent};
use crate::env::{Action, ActionMode, EnvConfig, Environment};
use crate::linknet::StepMetrics;
use crate::scenario::{heterogeneity_index, AreaSpec, FapPosition, Scenario};
use crate::{Error, Result};

/// Per-episode summary; every mean runs over the episode's rewarded steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub scenario_id: u64,
    /// Absent for single-user scenarios, where the index is undefined.
    pub heterogeneity: Option<f64>,
    pub mean_utility: f64,
    pub mean_throughput: f64,
    pub mean_delay: f64,
    pub mean_plr: f64,
    pub cumulative_reward: f64,
}

impl EpisodeResult {
    pub fn from_trace(s: &Scenario, area: &AreaSpec, trace: &[StepMetrics]) -> Result<Self> {
        if trace.is_empty() {
            return Err(Error::InvalidInput("episode has no steps".into()));
        }
        let n = trace.len() as f64;
        let avg = |f: fn(&StepMetrics) -> f64| trace.iter().map(f).sum::<f64>() / n;
        let cumulative_reward = trace.iter().map(|m| m.utility).sum::<f64>();
        Ok(EpisodeResult {
            scenario_id: s.id,
            heterogeneity: if s.users.len() >= 2 {
                Some(heterogeneity_index(s, area)?)
            } else {
                None
            },
            mean_utility: cumulative_reward / n,
            mean_throughput: avg(|m| m.norm_throughput),
            mean_delay: avg(|m| m.norm_delay),
            mean_plr: avg(|m| m.mean_plr),
            cumulative_reward,
        })
    }
}

/// What places the FAP during an evaluation episode.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    /// Greedy moves of a trained DDQN agent.
    Ddqn(&'a DdqnAgent),
    /// Noise-free actions of a trained DDPG actor.
    Ddpg(&'a DdpgAgent),
    /// Static distance-minimising position.
    Baseline,
    /// Static best lattice position.
    Oracle,
    /// Static given position.
    Fixed(FapPosition),
}

impl Policy<'_> {
    fn mode(&self) -> ActionMode {
        match self {
            Policy::Ddpg(_) => ActionMode::Continuous,
            _ => ActionMode::Discrete,
        }
    }
}

/// One evaluation episode of `horizon` steps.
pub fn run_episode(env: &Environment, policy: &Policy, s: &Arc<Scenario>) -> Result<EpisodeResult> {
    let cfg = env.config();
    let fixed = match policy {
        Policy::Baseline => Some(baseline_position(s, &cfg.area)?),
        Policy::Oracle => Some(oracle_best_position(env, s)?.position),
        Policy::Fixed(p) => {
            if !cfg.area.contains(p) {
                return Err(Error::InvalidInput(format!("position {p:?} outside the flight volume")));
            }
            Some(*p)
        }
        _ => None,
    };
    if let Some(p) = fixed {
        let m = env.simulate(&p, s)?;
        let trace = vec![m; cfg.horizon];
        return EpisodeResult::from_trace(s, &cfg.area, &trace);
    }
    let (mut state, mut obs) = env.reset(s.clone())?;
    while !state.done(cfg.horizon) {
        let action = match policy {
            Policy::Ddqn(agent) => {
                let mask = env.valid_action_mask(&state)?;
                Action::Discrete(agent.greedy(obs.as_slice(), &mask)?)
            }
            Policy::Ddpg(agent) => Action::Continuous(agent.act(obs.as_slice())?),
            _ => unreachable!("static policies return above"),
        };
        obs = env.step(&mut state, action)?.observation;
    }
    EpisodeResult::from_trace(s, &cfg.area, &state.trace)
}

/// One episode per scenario, results ordered by scenario id. With `jobs > 1`
/// episodes run on a thread pool; each is a pure function of its inputs, so
/// the output does not depend on `jobs`.
pub fn evaluate(
    cfg: &EnvConfig,
    policy: &Policy,
    scenarios: &[Arc<Scenario>],
    jobs: usize,
) -> Result<Vec<EpisodeResult>> {
    let env = Environment::new(cfg.clone(), policy.mode())?;
    let mut results = if jobs <= 1 {
        scenarios
            .iter()
            .map(|s| run_episode(&env, policy, s))
            .collect::<Result<Vec<_>>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| {
            scenarios
                .par_iter()
                .map(|s| run_episode(&env, policy, s))
                .collect::<Result<Vec<_>>>()
        })?
    };
    results.sort_by_key(|r| r.scenario_id);
    Ok(results)
}
