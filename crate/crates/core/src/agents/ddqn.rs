use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::persist::{load_net, load_opt, save_net, save_opt, AgentManifest};
use super::{soft_update, AgentConfig, AgentKind, Batch, Experience, ExplorationSchedule, ReplayBuffer};
use crate::env::{DiscreteAction, N_DISCRETE_ACTIONS};
use crate::neural::{mse_loss, q_network, BackwardOptions, Network, RmsProp};
use crate::rng::{self, RngState};
use crate::{Error, Result};

/// Index of the largest valid value; ties go to the lowest index.
pub fn masked_argmax(values: &[f32], mask: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (&v, &ok)) in values.iter().zip(mask).enumerate() {
        if ok && best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Double DQN targets `r + gamma * Q_target(s', argmax_valid Q_online(s'))`
/// for a batch of next-state value rows. Every target bootstraps, including
/// the last step of an episode.
pub fn double_q_targets(
    next_online: &[f32],
    next_target: &[f32],
    rewards: &[f64],
    next_masks: &[[bool; N_DISCRETE_ACTIONS]],
    gamma: f64,
) -> Result<Vec<f64>> {
    let k = N_DISCRETE_ACTIONS;
    let n = rewards.len();
    if next_online.len() != n * k || next_target.len() != n * k || next_masks.len() != n {
        return Err(Error::Shape(format!("inconsistent batch of {n} targets")));
    }
    (0..n)
        .map(|i| {
            let row = i * k..(i + 1) * k;
            let best = masked_argmax(&next_online[row], &next_masks[i])
                .ok_or_else(|| Error::Contract("transition with an empty next mask".into()))?;
            Ok(rewards[i] + gamma * next_target[i * k + best] as f64)
        })
        .collect()
}

/// Double DQN over the 13 sequential moves with invalid moves masked out.
#[derive(Debug, Clone)]
pub struct DdqnAgent {
    config: AgentConfig,
    schedule: ExplorationSchedule,
    online: Network<f32>,
    target: Network<f32>,
    optimizer: RmsProp<f32>,
    rng: ChaCha8Rng,
    grad_steps: u64,
}

impl DdqnAgent {
    /// Fresh agent with Glorot-initialised weights drawn from `seed`.
    pub fn new(
        obs_shape: [usize; 3],
        config: AgentConfig,
        schedule: ExplorationSchedule,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let mut init = rng::stream(seed, rng::tag::WEIGHT_INIT, 0);
        let online = q_network(obs_shape, N_DISCRETE_ACTIONS, &config.arch, &mut init)?;
        Self::from_network(online, config, schedule, rng::stream(seed, rng::tag::AGENT, 0))
    }

    /// Agent around an arbitrary Q-network with 13 outputs.
    pub fn from_network(
        online: Network<f32>,
        config: AgentConfig,
        schedule: ExplorationSchedule,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        schedule.validate()?;
        if !matches!(schedule, ExplorationSchedule::EpsilonGreedy { .. }) {
            return Err(Error::InvalidConfig("DDQN explores epsilon-greedily".into()));
        }
        if online.output_len() != N_DISCRETE_ACTIONS || online.side_width() != 0 {
            return Err(Error::Shape(format!(
                "Q-network must map observations to {N_DISCRETE_ACTIONS} values"
            )));
        }
        Ok(DdqnAgent {
            optimizer: RmsProp::new(config.learning_rate),
            target: online.clone(),
            online,
            config,
            schedule,
            rng,
            grad_steps: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn schedule(&self) -> &ExplorationSchedule {
        &self.schedule
    }

    pub fn online(&self) -> &Network<f32> {
        &self.online
    }

    pub fn target(&self) -> &Network<f32> {
        &self.target
    }

    pub fn online_mut(&mut self) -> &mut Network<f32> {
        &mut self.online
    }

    pub fn grad_steps(&self) -> u64 {
        self.grad_steps
    }

    /// Changes the step size while keeping the optimizer accumulators.
    pub fn set_learning_rate(&mut self, lr: f64) -> Result<()> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate must be positive, got {lr}")));
        }
        self.config.learning_rate = lr;
        self.optimizer.learning_rate = lr;
        Ok(())
    }

    pub fn epsilon(&self, episode: u64) -> f64 {
        self.schedule.value(episode)
    }

    pub fn q_values(&self, obs: &[f32]) -> Result<Vec<f32>> {
        self.online.predict_flat(obs, 1, None)
    }

    /// Epsilon-greedy choice among valid moves; greedy when `explore` is off.
    pub fn select(
        &mut self,
        obs: &[f32],
        mask: &[bool; N_DISCRETE_ACTIONS],
        episode: u64,
        explore: bool,
    ) -> Result<DiscreteAction> {
        if !mask.iter().any(|&m| m) {
            return Err(Error::Contract("no valid action in mask".into()));
        }
        if explore && self.rng.random::<f64>() < self.epsilon(episode) {
            let valid: Vec<usize> = (0..N_DISCRETE_ACTIONS).filter(|&i| mask[i]).collect();
            return DiscreteAction::new(valid[self.rng.random_range(0..valid.len())]);
        }
        self.greedy(obs, mask)
    }

    /// Highest-valued valid move, lowest code on ties.
    pub fn greedy(&self, obs: &[f32], mask: &[bool; N_DISCRETE_ACTIONS]) -> Result<DiscreteAction> {
        let q = self.q_values(obs)?;
        let best = masked_argmax(&q, mask)
            .ok_or_else(|| Error::Contract("no valid action in mask".into()))?;
        DiscreteAction::new(best)
    }

    /// One gradient step on a replay batch; `None` until the buffer holds a
    /// full batch.
    pub fn train_step<E: Experience>(&mut self, buffer: &mut ReplayBuffer<E>) -> Result<Option<f64>> {
        let n = self.config.batch_size;
        if buffer.len() < n {
            return Ok(None);
        }
        let b = Batch::gather(buffer, n, self.online.input_len(), true)?;
        let next_online = self.online.predict_flat(&b.next_obs, n, None)?;
        let next_target = self.target.predict_flat(&b.next_obs, n, None)?;
        let targets = double_q_targets(
            &next_online,
            &next_target,
            &b.rewards,
            &b.next_masks,
            self.config.gamma,
        )?;

        let k = N_DISCRETE_ACTIONS;
        let dropout_seed = self.rng.random::<u64>();
        let (q, cache) = self.online.forward_flat(&b.obs, n, None, true, dropout_seed)?;
        let taken: Vec<f64> = (0..n).map(|i| q[i * k + b.discrete[i].code()] as f64).collect();
        let (loss, g) = mse_loss(&taken, &targets)?;
        let mut out_grad = vec![0.0f32; n * k];
        for i in 0..n {
            out_grad[i * k + b.discrete[i].code()] = g[i] as f32;
        }
        let grads = self
            .online
            .backward_flat(&cache, &out_grad, BackwardOptions::default())?;
        self.optimizer.step(&mut self.online, &grads)?;
        self.grad_steps += 1;
        if self.grad_steps % self.config.target_update_period == 0 {
            soft_update(&mut self.target, &self.online, self.config.tau)?;
        }
        Ok(Some(loss))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let m = AgentManifest::new(
            AgentKind::Ddqn,
            &self.config,
            &self.schedule,
            self.grad_steps,
            RngState::capture(&self.rng),
        );
        m.write(dir)?;
        save_net(dir, "online", &self.online)?;
        save_net(dir, "target", &self.target)?;
        save_opt(dir, "online", &self.optimizer)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let m = AgentManifest::read(dir, AgentKind::Ddqn)?;
        let online = load_net(dir, "online")?;
        let target = load_net(dir, "target")?;
        if !online.same_architecture(&target) {
            return Err(Error::format("checkpoint", "online and target networks differ in shape"));
        }
        let optimizer = load_opt(dir, "online", &online, m.config.learning_rate)?;
        let mut agent = DdqnAgent::from_network(online, m.config, m.schedule, m.rng.restore()?)?;
        agent.target = target;
        agent.optimizer = optimizer;
        agent.grad_steps = m.grad_steps;
        Ok(agent)
    }
}
