use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::output::{read_training_log, write_training_log};
use crate::agents::{
    AgentConfig, AgentKind, DdpgAgent, DdqnAgent, Experience, ExplorationSchedule, ReplayBuffer,
};
use crate::env::{
    Action, ActionMode, ContinuousAction, DiscreteAction, EnvConfig, Environment, N_DISCRETE_ACTIONS,
};
use crate::rng::{self, RngState};
use crate::scenario::{FapPosition, Scenario};
use crate::{Error, Result};

/// Replay entry that stores positions instead of observations; the
/// observations are rebuilt from the scenario when the entry is sampled.
#[derive(Debug, Clone)]
pub struct Record {
    env: Environment,
    scenario: Arc<Scenario>,
    from: FapPosition,
    to: FapPosition,
    action: Action,
    reward: f64,
    next_mask: Option<[bool; N_DISCRETE_ACTIONS]>,
    terminal: bool,
}

impl Record {
    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    pub fn from(&self) -> FapPosition {
        self.from
    }

    pub fn to(&self) -> FapPosition {
        self.to
    }
}

impl Experience for Record {
    fn write_obs(&self, out: &mut [f32]) -> Result<()> {
        self.env.observe_into(&self.from, &self.scenario, out)
    }

    fn write_next_obs(&self, out: &mut [f32]) -> Result<()> {
        self.env.observe_into(&self.to, &self.scenario, out)
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

#[derive(Debug, Clone)]
pub enum Learner {
    Ddqn(DdqnAgent),
    Ddpg(DdpgAgent),
}

impl Learner {
    pub fn kind(&self) -> AgentKind {
        match self {
            Learner::Ddqn(_) => AgentKind::Ddqn,
            Learner::Ddpg(_) => AgentKind::Ddpg,
        }
    }

    fn config(&self) -> &AgentConfig {
        match self {
            Learner::Ddqn(a) => a.config(),
            Learner::Ddpg(a) => a.config(),
        }
    }

    fn exploration(&self, episode: u64) -> f64 {
        match self {
            Learner::Ddqn(a) => a.epsilon(episode),
            Learner::Ddpg(a) => a.sigma(episode),
        }
    }

    pub fn grad_steps(&self) -> u64 {
        match self {
            Learner::Ddqn(a) => a.grad_steps(),
            Learner::Ddpg(a) => a.grad_steps(),
        }
    }

    fn train_step(&mut self, replay: &mut ReplayBuffer<Record>) -> Result<Option<f64>> {
        match self {
            Learner::Ddqn(a) => a.train_step(replay),
            Learner::Ddpg(a) => Ok(a.train_step(replay)?.map(|(critic, _)| critic)),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        match self {
            Learner::Ddqn(a) => a.save(dir),
            Learner::Ddpg(a) => a.save(dir),
        }
    }

    pub fn load(dir: &Path, kind: AgentKind) -> Result<Self> {
        Ok(match kind {
            AgentKind::Ddqn => Learner::Ddqn(DdqnAgent::load(dir)?),
            AgentKind::Ddpg => Learner::Ddpg(DdpgAgent::load(dir)?),
        })
    }
}

pub fn action_mode(kind: AgentKind) -> ActionMode {
    match kind {
        AgentKind::Ddqn => ActionMode::Discrete,
        AgentKind::Ddpg => ActionMode::Continuous,
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    /// 1-based episode number.
    pub episode: u64,
    pub scenario_id: u64,
    pub cumulative_reward: f64,
    /// Epsilon (DDQN) or noise sigma (DDPG) used in the episode.
    pub exploration: f64,
    /// Mean loss of the episode's gradient steps; empty before training starts.
    pub mean_loss: Option<f64>,
}

/// Episode counts at which checkpoints are written: the untrained anchor,
/// every sweep point not beyond `total`, and `total` itself.
pub fn checkpoint_points(sweep: &[u64], total: u64) -> Vec<u64> {
    let mut set: BTreeSet<u64> = sweep.iter().copied().filter(|&p| p <= total).collect();
    set.insert(0);
    set.insert(total);
    set.into_iter().collect()
}

pub fn checkpoint_dir(root: &Path, episodes: u64) -> PathBuf {
    root.join(format!("episode-{episodes:06}"))
}

/// Visits per scenario id according to a training log.
pub fn visit_counts(log: &[TrainLogRow]) -> BTreeMap<u64, u64> {
    let mut out = BTreeMap::new();
    for row in log {
        *out.entry(row.scenario_id).or_insert(0) += 1;
    }
    out
}

const RUN_MANIFEST_FILE: &str = "run.json";
const RUN_MANIFEST_FORMAT: u32 = 1;
const REPLAY_FILE: &str = "replay.bin";
const REPLAY_MAGIC: &[u8; 8] = b"FAPREPLY";
const LOG_FILE: &str = "training_log.csv";
const AGENT_DIR: &str = "agent";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunManifest {
    format: u32,
    kind: AgentKind,
    seed: u64,
    episodes_done: u64,
    grad_steps: u64,
    scenario_ids: Vec<u64>,
    env: EnvConfig,
    replay_capacity: usize,
    replay_rng: RngState,
}

/// Sequential training of one agent over a cyclic scenario schedule.
#[derive(Debug, Clone)]
pub struct TrainingRun {
    env: Environment,
    learner: Learner,
    replay: ReplayBuffer<Record>,
    scenarios: Vec<Arc<Scenario>>,
    episodes_done: u64,
    log: Vec<TrainLogRow>,
    seed: u64,
}

impl TrainingRun {
    /// Fresh run. Scenarios are visited in ascending id order, cyclically.
    pub fn new(
        env_cfg: EnvConfig,
        kind: AgentKind,
        agent_cfg: AgentConfig,
        schedule: ExplorationSchedule,
        scenarios: Vec<Scenario>,
        seed: u64,
    ) -> Result<Self> {
        let env = Environment::new(env_cfg, action_mode(kind))?;
        let scenarios = prepare_scenarios(&env, scenarios)?;
        let obs_shape = env.config().obs_shape();
        let capacity = agent_cfg.replay_capacity;
        let learner = match kind {
            AgentKind::Ddqn => Learner::Ddqn(DdqnAgent::new(obs_shape, agent_cfg, schedule, seed)?),
            AgentKind::Ddpg => Learner::Ddpg(DdpgAgent::new(obs_shape, agent_cfg, schedule, seed)?),
        };
        Ok(TrainingRun {
            env,
            learner,
            replay: ReplayBuffer::new(capacity, rng::stream(seed, rng::tag::REPLAY, 0))?,
            scenarios,
            episodes_done: 0,
            log: Vec::new(),
            seed,
        })
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn learner(&self) -> &Learner {
        &self.learner
    }

    pub fn replay(&self) -> &ReplayBuffer<Record> {
        &self.replay
    }

    pub fn scenarios(&self) -> &[Arc<Scenario>] {
        &self.scenarios
    }

    pub fn episodes_done(&self) -> u64 {
        self.episodes_done
    }

    pub fn log(&self) -> &[TrainLogRow] {
        &self.log
    }

    /// Runs the next episode of the schedule with exploration and learning.
    pub fn run_episode(&mut self) -> Result<&TrainLogRow> {
        let episode = self.episodes_done;
        let scenario = self.scenarios[(episode % self.scenarios.len() as u64) as usize].clone();
        let horizon = self.env.config().horizon;
        let every_step = self.learner.config().train_every_step;
        let (mut state, mut obs) = self.env.reset(scenario.clone())?;
        let mut losses = Vec::new();
        let mut cumulative = 0.0;
        while !state.done(horizon) {
            let from = state.fap;
            let action = match &mut self.learner {
                Learner::Ddqn(agent) => {
                    let mask = self.env.valid_action_mask(&state)?;
                    Action::Discrete(agent.select(obs.as_slice(), &mask, episode, true)?)
                }
                Learner::Ddpg(agent) => {
                    Action::Continuous(agent.select(obs.as_slice(), episode, true)?)
                }
            };
            let outcome = self.env.step(&mut state, action)?;
            let next_mask = match self.learner {
                Learner::Ddqn(_) => Some(self.env.valid_action_mask(&state)?),
                Learner::Ddpg(_) => None,
            };
            self.replay.push(Record {
                env: self.env.clone(),
                scenario: scenario.clone(),
                from,
                to: state.fap,
                action,
                reward: outcome.reward,
                next_mask,
                terminal: outcome.done,
            });
            if every_step {
                losses.extend(self.learner.train_step(&mut self.replay)?);
            }
            cumulative += outcome.reward;
            obs = outcome.observation;
        }
        if !every_step {
            for _ in 0..horizon {
                losses.extend(self.learner.train_step(&mut self.replay)?);
            }
        }
        self.episodes_done += 1;
        self.log.push(TrainLogRow {
            episode: self.episodes_done,
            scenario_id: scenario.id,
            cumulative_reward: cumulative,
            exploration: self.learner.exploration(episode),
            mean_loss: (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64),
        });
        Ok(self.log.last().expect("just pushed"))
    }

    /// Trains until `total` episodes are done, writing a checkpoint under
    /// `root` whenever the episode count is one of `points`.
    pub fn train_until(&mut self, total: u64, points: &[u64], root: Option<&Path>) -> Result<()> {
        if let Some(root) = root {
            if points.contains(&self.episodes_done)
                && !checkpoint_dir(root, self.episodes_done).exists()
            {
                self.save(&checkpoint_dir(root, self.episodes_done))?;
            }
        }
        while self.episodes_done < total {
            self.run_episode()?;
            if let Some(root) = root {
                if points.contains(&self.episodes_done) {
                    self.save(&checkpoint_dir(root, self.episodes_done))?;
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.learner.save(&dir.join(AGENT_DIR))?;
        let manifest = RunManifest {
            format: RUN_MANIFEST_FORMAT,
            kind: self.learner.kind(),
            seed: self.seed,
            episodes_done: self.episodes_done,
            grad_steps: self.learner.grad_steps(),
            scenario_ids: self.scenarios.iter().map(|s| s.id).collect(),
            env: self.env.config().clone(),
            replay_capacity: self.replay.capacity(),
            replay_rng: self.replay.rng_state(),
        };
        let path = dir.join(RUN_MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::format("run manifest", e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;

        let path = dir.join(REPLAY_FILE);
        let mut buf = Vec::new();
        write_replay(&mut buf, &self.replay)?;
        fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;

        let path = dir.join(LOG_FILE);
        let mut buf = Vec::new();
        write_training_log(&mut buf, &self.log)?;
        fs::write(&path, buf).map_err(|e| Error::io(&path, e))
    }

    /// Restores a run saved by [`TrainingRun::save`]. `scenarios` must be the
    /// set the run was trained on.
    pub fn resume(dir: &Path, scenarios: Vec<Scenario>) -> Result<Self> {
        let manifest = read_run_manifest(dir)?;
        let env = Environment::new(manifest.env.clone(), action_mode(manifest.kind))?;
        let scenarios = prepare_scenarios(&env, scenarios)?;
        let ids: Vec<u64> = scenarios.iter().map(|s| s.id).collect();
        if ids != manifest.scenario_ids {
            return Err(Error::InvalidInput(
                "scenario set differs from the one the checkpoint was trained on".into(),
            ));
        }
        let learner = Learner::load(&dir.join(AGENT_DIR), manifest.kind)?;
        if learner.grad_steps() != manifest.grad_steps {
            return Err(Error::format("run manifest", "gradient step count disagrees with agent"));
        }
        let path = dir.join(REPLAY_FILE);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let by_id: BTreeMap<u64, Arc<Scenario>> =
            scenarios.iter().map(|s| (s.id, s.clone())).collect();
        let entries = read_replay(bytes.as_slice(), &env, &by_id)?;
        let replay = ReplayBuffer::restore(
            manifest.replay_capacity,
            entries,
            manifest.replay_rng.restore()?,
        )?;
        let path = dir.join(LOG_FILE);
        let log = read_training_log(fs::File::open(&path).map_err(|e| Error::io(&path, e))?)?;
        if log.len() as u64 != manifest.episodes_done {
            return Err(Error::format("training log", "row count disagrees with the manifest"));
        }
        Ok(TrainingRun {
            env,
            learner,
            replay,
            scenarios,
            episodes_done: manifest.episodes_done,
            log,
            seed: manifest.seed,
        })
    }
}

/// Kind of agent stored in a run checkpoint.
pub fn checkpoint_kind(dir: &Path) -> Result<AgentKind> {
    Ok(read_run_manifest(dir)?.kind)
}

/// Environment configuration a checkpoint was trained with.
pub fn checkpoint_env(dir: &Path) -> Result<EnvConfig> {
    Ok(read_run_manifest(dir)?.env)
}

pub fn load_checkpoint_learner(dir: &Path) -> Result<Learner> {
    let m = read_run_manifest(dir)?;
    Learner::load(&dir.join(AGENT_DIR), m.kind)
}

fn read_run_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(RUN_MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: RunManifest =
        serde_json::from_str(&text).map_err(|e| Error::format("run manifest", e.to_string()))?;
    if m.format != RUN_MANIFEST_FORMAT {
        return Err(Error::format("run manifest", format!("unsupported format {}", m.format)));
    }
    Ok(m)
}

fn prepare_scenarios(env: &Environment, mut scenarios: Vec<Scenario>) -> Result<Vec<Arc<Scenario>>> {
    if scenarios.is_empty() {
        return Err(Error::InvalidInput("training needs at least one scenario".into()));
    }
    scenarios.sort_by_key(|s| s.id);
    if scenarios.windows(2).any(|w| w[0].id == w[1].id) {
        return Err(Error::InvalidInput("duplicate scenario id in training set".into()));
    }
    for s in &scenarios {
        s.validate(&env.config().area)?;
    }
    Ok(scenarios.into_iter().map(Arc::new).collect())
}

fn write_replay<W: Write>(mut w: W, replay: &ReplayBuffer<Record>) -> Result<()> {
    let io = |e| Error::io(REPLAY_FILE, e);
    w.write_all(REPLAY_MAGIC).map_err(io)?;
    w.write_all(&1u32.to_le_bytes()).map_err(io)?;
    w.write_all(&(replay.len() as u64).to_le_bytes()).map_err(io)?;
    let mut buf = Vec::with_capacity(96);
    for r in replay.iter() {
        buf.clear();
        buf.extend(r.scenario.id.to_le_bytes());
        for v in [r.from.x, r.from.y, r.from.z, r.to.x, r.to.y, r.to.z, r.reward] {
            buf.extend(v.to_le_bytes());
        }
        match r.action {
            Action::Discrete(a) => {
                buf.push(0);
                buf.push(a.code() as u8);
            }
            Action::Continuous(a) => {
                buf.push(1);
                for v in [a.ax, a.ay, a.az] {
                    buf.extend(v.to_le_bytes());
                }
            }
        }
        let mask = r.next_mask.map_or(0u16, |m| {
            m.iter().enumerate().fold(1 << 15, |acc, (i, &ok)| acc | (ok as u16) << i)
        });
        buf.extend(mask.to_le_bytes());
        buf.push(r.terminal as u8);
        w.write_all(&buf).map_err(io)?;
    }
    Ok(())
}

fn read_replay<R: Read>(
    mut r: R,
    env: &Environment,
    scenarios: &BTreeMap<u64, Arc<Scenario>>,
) -> Result<Vec<Record>> {
    let bad = |d: &str| Error::format("replay file", d.to_string());
    let mut take = |n: usize| -> Result<Vec<u8>> {
        let mut b = vec![0; n];
        r.read_exact(&mut b).map_err(|_| bad("truncated"))?;
        Ok(b)
    };
    if take(8)? != REPLAY_MAGIC {
        return Err(bad("bad magic"));
    }
    let u64_at = |b: &[u8]| u64::from_le_bytes(b.try_into().expect("8 bytes"));
    let f64_at = |b: &[u8]| f64::from_le_bytes(b.try_into().expect("8 bytes"));
    if u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) != 1 {
        return Err(bad("unsupported version"));
    }
    let count = u64_at(&take(8)?);
    let mut out = Vec::new();
    for _ in 0..count {
        let head = take(64)?;
        let id = u64_at(&head[..8]);
        let v: Vec<f64> = head[8..].chunks(8).map(f64_at).collect();
        let scenario = scenarios
            .get(&id)
            .ok_or_else(|| bad(&format!("unknown scenario id {id}")))?
            .clone();
        let action = match take(1)?[0] {
            0 => Action::Discrete(DiscreteAction::new(take(1)?[0] as usize)?),
            1 => {
                let b = take(24)?;
                Action::Continuous(ContinuousAction::new(f64_at(&b[..8]), f64_at(&b[8..16]), f64_at(&b[16..])))
            }
            _ => return Err(bad("unknown action kind")),
        };
        let tail = take(3)?;
        let mask_bits = u16::from_le_bytes([tail[0], tail[1]]);
        let next_mask = (mask_bits & 1 << 15 != 0).then(|| {
            let mut m = [false; N_DISCRETE_ACTIONS];
            for (i, slot) in m.iter_mut().enumerate() {
                *slot = mask_bits >> i & 1 == 1;
            }
            m
        });
        out.push(Record {
            env: env.clone(),
            scenario,
            from: FapPosition::new(v[0], v[1], v[2]),
            to: FapPosition::new(v[3], v[4], v[5]),
            action,
            reward: v[6],
            next_mask,
            terminal: tail[2] != 0,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::io(REPLAY_FILE, e))? != 0 {
        return Err(bad("trailing bytes"));
    }
    Ok(out)
}
