use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::persist::{load_net, load_opt, save_net, save_opt, AgentManifest};
use super::{soft_update, AgentConfig, AgentKind, Batch, Experience, ExplorationSchedule, ReplayBuffer};
use crate::env::ContinuousAction;
use crate::neural::{actor_network, critic_network, huber_loss, BackwardOptions, Network, RmsProp};
use crate::rng::{self, RngState};
use crate::{Error, Result};

pub const ACTION_DIM: usize = 3;

/// Deterministic actor-critic over normalised absolute coordinates.
#[derive(Debug, Clone)]
pub struct DdpgAgent {
    config: AgentConfig,
    schedule: ExplorationSchedule,
    actor: Network<f32>,
    critic: Network<f32>,
    actor_target: Network<f32>,
    critic_target: Network<f32>,
    actor_opt: RmsProp<f32>,
    critic_opt: RmsProp<f32>,
    rng: ChaCha8Rng,
    grad_steps: u64,
}

impl DdpgAgent {
    pub fn new(
        obs_shape: [usize; 3],
        config: AgentConfig,
        schedule: ExplorationSchedule,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let mut init = rng::stream(seed, rng::tag::WEIGHT_INIT, 0);
        let actor = actor_network(obs_shape, ACTION_DIM, &config.arch, &mut init)?;
        let critic = critic_network(obs_shape, ACTION_DIM, &config.arch, &mut init)?;
        Self::from_networks(actor, critic, config, schedule, rng::stream(seed, rng::tag::AGENT, 0))
    }

    pub fn from_networks(
        actor: Network<f32>,
        critic: Network<f32>,
        config: AgentConfig,
        schedule: ExplorationSchedule,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        schedule.validate()?;
        if !matches!(schedule, ExplorationSchedule::GaussianNoise { .. }) {
            return Err(Error::InvalidConfig("DDPG explores with Gaussian noise".into()));
        }
        if actor.output_len() != ACTION_DIM
            || critic.output_len() != 1
            || critic.side_width() != ACTION_DIM
            || actor.input_shape() != critic.input_shape()
        {
            return Err(Error::Shape(
                "actor must output 3 coordinates and the critic score (obs, action) pairs".into(),
            ));
        }
        Ok(DdpgAgent {
            actor_opt: RmsProp::new(config.learning_rate),
            critic_opt: RmsProp::new(config.learning_rate),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
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

    pub fn actor(&self) -> &Network<f32> {
        &self.actor
    }

    pub fn critic(&self) -> &Network<f32> {
        &self.critic
    }

    pub fn actor_target(&self) -> &Network<f32> {
        &self.actor_target
    }

    pub fn critic_target(&self) -> &Network<f32> {
        &self.critic_target
    }

    pub fn grad_steps(&self) -> u64 {
        self.grad_steps
    }

    pub fn sigma(&self, episode: u64) -> f64 {
        self.schedule.value(episode)
    }

    /// Actor output, plus clipped Gaussian noise when exploring.
    pub fn select(&mut self, obs: &[f32], episode: u64, explore: bool) -> Result<ContinuousAction> {
        let a = self.act(obs)?;
        let mut v = [a.ax, a.ay, a.az];
        if explore {
            let noise = Normal::new(0.0, self.sigma(episode))
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
            for x in &mut v {
                *x += noise.sample(&mut self.rng);
            }
        }
        Ok(ContinuousAction::new(v[0], v[1], v[2]).clipped())
    }

    /// Noise-free actor output.
    pub fn act(&self, obs: &[f32]) -> Result<ContinuousAction> {
        let a = self.actor.predict_flat(obs, 1, None)?;
        Ok(ContinuousAction::new(a[0] as f64, a[1] as f64, a[2] as f64))
    }

    /// Critic and actor updates on one replay batch; `None` until the buffer
    /// holds a full batch. Returns the critic loss and the actor objective.
    pub fn train_step<E: Experience>(
        &mut self,
        buffer: &mut ReplayBuffer<E>,
    ) -> Result<Option<(f64, f64)>> {
        let n = self.config.batch_size;
        if buffer.len() < n {
            return Ok(None);
        }
        let b = Batch::gather(buffer, n, self.actor.input_len(), false)?;
        let next_actions = self.actor_target.predict_flat(&b.next_obs, n, None)?;
        let next_q = self
            .critic_target
            .predict_flat(&b.next_obs, n, Some(&next_actions))?;
        let targets: Vec<f64> = (0..n)
            .map(|i| b.rewards[i] + self.config.gamma * next_q[i] as f64)
            .collect();

        let actions: Vec<f32> = b.continuous.iter().flat_map(|a| a.to_array()).collect();
        let seed = self.rng.random::<u64>();
        let (q, cache) = self
            .critic
            .forward_flat(&b.obs, n, Some(&actions), true, seed)?;
        let q64: Vec<f64> = q.iter().map(|&v| v as f64).collect();
        let (critic_loss, g) = huber_loss(&q64, &targets, 1.0)?;
        let g32: Vec<f32> = g.iter().map(|&v| v as f32).collect();
        let grads = self
            .critic
            .backward_flat(&cache, &g32, BackwardOptions::default())?;
        self.critic_opt.step(&mut self.critic, &grads)?;

        let seed = self.rng.random::<u64>();
        let critic = &self.critic;
        let objective = actor_update(
            &mut self.actor,
            &mut self.actor_opt,
            seed,
            &b.obs,
            n,
            |a| critic_objective(critic, &b.obs, n, a),
        )?;

        self.grad_steps += 1;
        if self.grad_steps % self.config.target_update_period == 0 {
            soft_update(&mut self.actor_target, &self.actor, self.config.tau)?;
            soft_update(&mut self.critic_target, &self.critic, self.config.tau)?;
        }
        Ok(Some((critic_loss, objective)))
    }

    /// One actor ascent step against an arbitrary objective of the batch
    /// actions. `objective` returns its value and gradient with respect to
    /// the flat `batch x 3` action array.
    pub fn actor_step_with<F>(&mut self, obs: &[f32], batch: usize, objective: F) -> Result<f64>
    where
        F: FnOnce(&[f32]) -> Result<(f64, Vec<f32>)>,
    {
        let seed = self.rng.random::<u64>();
        actor_update(&mut self.actor, &mut self.actor_opt, seed, obs, batch, objective)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let m = AgentManifest::new(
            AgentKind::Ddpg,
            &self.config,
            &self.schedule,
            self.grad_steps,
            RngState::capture(&self.rng),
        );
        m.write(dir)?;
        save_net(dir, "actor", &self.actor)?;
        save_net(dir, "critic", &self.critic)?;
        save_net(dir, "actor_target", &self.actor_target)?;
        save_net(dir, "critic_target", &self.critic_target)?;
        save_opt(dir, "actor", &self.actor_opt)?;
        save_opt(dir, "critic", &self.critic_opt)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let m = AgentManifest::read(dir, AgentKind::Ddpg)?;
        let actor = load_net(dir, "actor")?;
        let critic = load_net(dir, "critic")?;
        let actor_target = load_net(dir, "actor_target")?;
        let critic_target = load_net(dir, "critic_target")?;
        if !actor.same_architecture(&actor_target) || !critic.same_architecture(&critic_target) {
            return Err(Error::format("checkpoint", "target networks differ in shape"));
        }
        let actor_opt = load_opt(dir, "actor", &actor, m.config.learning_rate)?;
        let critic_opt = load_opt(dir, "critic", &critic, m.config.learning_rate)?;
        let mut agent =
            DdpgAgent::from_networks(actor, critic, m.config, m.schedule, m.rng.restore()?)?;
        agent.actor_target = actor_target;
        agent.critic_target = critic_target;
        agent.actor_opt = actor_opt;
        agent.critic_opt = critic_opt;
        agent.grad_steps = m.grad_steps;
        Ok(agent)
    }
}

/// Mean critic value over the batch and its gradient with respect to the
/// actions, without touching the critic's parameters.
fn critic_objective(
    critic: &Network<f32>,
    obs: &[f32],
    batch: usize,
    actions: &[f32],
) -> Result<(f64, Vec<f32>)> {
    let (q, cache) = critic.forward_flat(obs, batch, Some(actions), false, 0)?;
    let mean = q.iter().map(|&v| v as f64).sum::<f64>() / batch as f64;
    let ones = vec![1.0 / batch as f32; batch];
    let g = critic.backward_flat(&cache, &ones, BackwardOptions { params: false, input: false })?;
    let side = g
        .side
        .ok_or_else(|| Error::Contract("critic produced no action gradient".into()))?;
    Ok((mean, side))
}

fn actor_update<F>(
    actor: &mut Network<f32>,
    opt: &mut RmsProp<f32>,
    dropout_seed: u64,
    obs: &[f32],
    batch: usize,
    objective: F,
) -> Result<f64>
where
    F: FnOnce(&[f32]) -> Result<(f64, Vec<f32>)>,
{
    let (a, cache) = actor.forward_flat(obs, batch, None, true, dropout_seed)?;
    let (value, grad) = objective(&a)?;
    if grad.len() != a.len() {
        return Err(Error::Shape(format!(
            "objective gradient has {} values for {} actions",
            grad.len(),
            a.len()
        )));
    }
    let ascent: Vec<f32> = grad.iter().map(|g| -g).collect();
    let grads = actor.backward_flat(&cache, &ascent, BackwardOptions::default())?;
    opt.step(actor, &grads)?;
    Ok(value)
}
