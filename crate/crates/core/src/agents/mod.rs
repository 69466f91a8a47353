//! Learning agents: masked Double DQN for sequential moves and DDPG for
//! absolute coordinates, with their replay buffer and exploration schedules.

mod ddpg;
mod ddqn;
mod persist;
mod replay;

use serde::{Deserialize, Serialize};

pub use ddpg::{DdpgAgent, ACTION_DIM};
pub use ddqn::{double_q_targets, masked_argmax, DdqnAgent};
pub use replay::ReplayBuffer;

use crate::env::{Action, ContinuousAction, DiscreteAction, Observation, N_DISCRETE_ACTIONS};
use crate::neural::{ArchConfig, Network};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Ddqn,
    Ddpg,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Ddqn => "ddqn",
            AgentKind::Ddpg => "ddpg",
        }
    }
}

impl std::str::FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ddqn" => Ok(AgentKind::Ddqn),
            "ddpg" => Ok(AgentKind::Ddpg),
            other => Err(Error::InvalidConfig(format!("unknown agent kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Gradient steps between target-network blends.
    pub target_update_period: u64,
    pub tau: f64,
    pub learning_rate: f64,
    /// One gradient step per environment step once the buffer holds a batch.
    pub train_every_step: bool,
    pub arch: ArchConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig::ddqn()
    }
}

impl AgentConfig {
    pub fn ddqn() -> Self {
        AgentConfig {
            gamma: 0.9,
            batch_size: 64,
            replay_capacity: 100_000,
            target_update_period: 1000,
            tau: 0.8,
            learning_rate: 1e-3,
            train_every_step: true,
            arch: ArchConfig::default(),
        }
    }

    pub fn ddpg() -> Self {
        AgentConfig {
            target_update_period: 2000,
            ..AgentConfig::ddqn()
        }
    }

    pub fn for_kind(kind: AgentKind) -> Self {
        match kind {
            AgentKind::Ddqn => AgentConfig::ddqn(),
            AgentKind::Ddpg => AgentConfig::ddpg(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return bad(format!(
                "need 0 < batch_size <= replay_capacity, got {} and {}",
                self.batch_size, self.replay_capacity
            ));
        }
        if self.target_update_period == 0 {
            return bad("target_update_period must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        self.arch.validate()
    }
}

/// Exploration level as a function of the episode index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExplorationSchedule {
    /// `eps(ep) = max(min, initial * exp(-decay * ep))`.
    EpsilonGreedy { initial: f64, decay: f64, min: f64 },
    /// Gaussian action noise with `sigma(ep) = max(min, initial * exp(-decay * ep))`.
    GaussianNoise { initial: f64, decay: f64, min: f64 },
}

impl ExplorationSchedule {
    pub fn epsilon_greedy() -> Self {
        ExplorationSchedule::EpsilonGreedy {
            initial: 1.0,
            decay: 0.02,
            min: 0.01,
        }
    }

    pub fn gaussian_noise() -> Self {
        ExplorationSchedule::GaussianNoise {
            initial: 0.3,
            decay: 0.02,
            min: 0.05,
        }
    }

    pub fn value(&self, episode: u64) -> f64 {
        let (initial, decay, min) = match *self {
            ExplorationSchedule::EpsilonGreedy { initial, decay, min }
            | ExplorationSchedule::GaussianNoise { initial, decay, min } => (initial, decay, min),
        };
        (initial * (-decay * episode as f64).exp()).max(min)
    }

    pub fn validate(&self) -> Result<()> {
        let (initial, decay, min) = match *self {
            ExplorationSchedule::EpsilonGreedy { initial, decay, min }
            | ExplorationSchedule::GaussianNoise { initial, decay, min } => (initial, decay, min),
        };
        if !(decay >= 0.0 && min >= 0.0 && initial >= min && initial.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "exploration schedule needs decay >= 0 and initial >= min >= 0, got {self:?}"
            )));
        }
        if matches!(self, ExplorationSchedule::EpsilonGreedy { .. }) && initial > 1.0 {
            return Err(Error::InvalidConfig("epsilon cannot exceed 1".into()));
        }
        Ok(())
    }
}

/// What a training step reads from a stored transition. Observations are
/// written into caller buffers so compact records can rebuild them on demand.
pub trait Experience {
    fn write_obs(&self, out: &mut [f32]) -> Result<()>;
    fn write_next_obs(&self, out: &mut [f32]) -> Result<()>;
    fn action(&self) -> Action;
    fn reward(&self) -> f64;
    /// Valid moves after the transition; `None` in continuous mode.
    fn next_mask(&self) -> Option<[bool; N_DISCRETE_ACTIONS]>;
    fn terminal(&self) -> bool;
}

/// A fully materialised transition.
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Observation,
    pub action: Action,
    pub reward: f64,
    pub next_obs: Observation,
    pub next_mask: Option<[bool; N_DISCRETE_ACTIONS]>,
    pub terminal: bool,
}

fn copy_into(src: &[f32], out: &mut [f32]) -> Result<()> {
    if src.len() != out.len() {
        return Err(Error::Shape(format!(
            "observation of {} values for a slot of {}",
            src.len(),
            out.len()
        )));
    }
    out.copy_from_slice(src);
    Ok(())
}

impl Experience for Transition {
    fn write_obs(&self, out: &mut [f32]) -> Result<()> {
        copy_into(self.obs.as_slice(), out)
    }

    fn write_next_obs(&self, out: &mut [f32]) -> Result<()> {
        copy_into(self.next_obs.as_slice(), out)
    }

    fn action(&self) -> Action {
        self.action
    }

    fn reward(&self) -> f64 {
        self.reward
    }

    fn next_mask(&self) -> Option<[bool; N_DISCRETE_ACTIONS]> {
        self.next_mask
    }

    fn terminal(&self) -> bool {
        self.terminal
    }
}

/// `target <- tau * online + (1 - tau) * target`, elementwise.
pub fn soft_update(target: &mut Network<f32>, online: &Network<f32>, tau: f64) -> Result<()> {
    if !target.same_architecture(online) {
        return Err(Error::Shape(
            "soft update between networks of different architecture".into(),
        ));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidInput(format!("tau must lie in [0, 1], got {tau}")));
    }
    if tau == 0.0 {
        return Ok(());
    }
    let t = tau as f32;
    let keep = (1.0 - tau) as f32;
    for (dst, src) in target.params_mut().into_iter().zip(online.params()) {
        if tau == 1.0 {
            dst.copy_from_slice(src);
        } else {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = t * *s + keep * *d;
            }
        }
    }
    Ok(())
}

/// Training batch gathered from replay.
pub(crate) struct Batch {
    pub obs: Vec<f32>,
    pub next_obs: Vec<f32>,
    pub rewards: Vec<f64>,
    pub discrete: Vec<DiscreteAction>,
    pub continuous: Vec<ContinuousAction>,
    pub next_masks: Vec<[bool; N_DISCRETE_ACTIONS]>,
}

impl Batch {
    pub fn gather<E: Experience>(
        buffer: &mut ReplayBuffer<E>,
        size: usize,
        obs_len: usize,
        discrete: bool,
    ) -> Result<Batch> {
        let picks = buffer.sample_indices(size)?;
        let mut b = Batch {
            obs: vec![0.0; size * obs_len],
            next_obs: vec![0.0; size * obs_len],
            rewards: Vec::with_capacity(size),
            discrete: Vec::new(),
            continuous: Vec::new(),
            next_masks: Vec::new(),
        };
        for (k, &i) in picks.iter().enumerate() {
            let e = buffer.get(i).expect("sampled index is in range");
            e.write_obs(&mut b.obs[k * obs_len..(k + 1) * obs_len])?;
            e.write_next_obs(&mut b.next_obs[k * obs_len..(k + 1) * obs_len])?;
            b.rewards.push(e.reward());
            match (e.action(), discrete) {
                (Action::Discrete(a), true) => {
                    b.discrete.push(a);
                    b.next_masks.push(e.next_mask().ok_or_else(|| {
                        Error::Contract("discrete transition without a next-state mask".into())
                    })?);
                }
                (Action::Continuous(a), false) => b.continuous.push(a),
                (_, true) => return Err(Error::UnsupportedMode("continuous")),
                (_, false) => return Err(Error::UnsupportedMode("discrete")),
            }
        }
        Ok(b)
    }
}

#[cfg(test)]
mod tests;
