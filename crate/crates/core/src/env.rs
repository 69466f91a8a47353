//! Reinforcement-learning environment around the fluid network model.
//!
//! Observations are six zone-grid matrices stacked channel-first and stored
//! row-major (`[channel][row][col]`, row = y zone, col = x zone):
//!
//! | channel | content                                             | stored |
//! |---------|-----------------------------------------------------|--------|
//! | 0       | FAP to zone-centre 3-D distance / sqrt(X²+Y²+Zmax²) | as is  |
//! | 1       | users in zone / U                                   | 1 - v  |
//! | 2       | offered load in zone / aggregate load               | 1 - v  |
//! | 3       | served throughput in zone / aggregate load          | 1 - v  |
//! | 4       | mean delay of the zone's users / delay cap          | 1 - v  |
//! | 5       | mean packet loss of the zone's users                | 1 - v  |
//!
//! Empty zones carry a raw 0 and therefore a stored 1 in channels 1 to 5.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::linknet::{simulate_step, QueueParams, RadioParams, StepMetrics, UtilityWeights};
use crate::scenario::{AreaSpec, FapPosition, Scenario};
use crate::{Error, Result};

pub const OBS_CHANNELS: usize = 6;
pub const N_DISCRETE_ACTIONS: usize = 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub area: AreaSpec,
    pub radio: RadioParams,
    pub queue: QueueParams,
    pub weights: UtilityWeights,
    /// Steps per episode.
    pub horizon: usize,
    /// Duration of one step in seconds. The fluid model works in rates, so
    /// this is bookkeeping only.
    pub step_seconds: f64,
    /// Altitude change of one vertical zone-step, in metres.
    pub z_step: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            area: AreaSpec::default(),
            radio: RadioParams::default(),
            queue: QueueParams::default(),
            weights: UtilityWeights::default(),
            horizon: 100,
            step_seconds: 1.0,
            z_step: 25.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.area.validate()?;
        self.radio.validate()?;
        self.queue.validate()?;
        self.weights.validate()?;
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least one step".into()));
        }
        if !(self.z_step > 0.0) {
            return Err(Error::InvalidConfig("z_step must be positive".into()));
        }
        Ok(())
    }

    /// Number of altitude levels of the discrete lattice.
    pub fn levels(&self) -> usize {
        ((self.area.z_max - self.area.z_min) / self.z_step + 1e-9).floor() as usize + 1
    }

    pub fn obs_shape(&self) -> [usize; 3] {
        [OBS_CHANNELS, self.area.rows(), self.area.cols()]
    }

    pub fn obs_len(&self) -> usize {
        OBS_CHANNELS * self.area.rows() * self.area.cols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionMode {
    Discrete,
    Continuous,
}

/// Stack of the six zone matrices, shared cheaply between transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    data: Arc<[f32]>,
    rows: usize,
    cols: usize,
}

impl Observation {
    pub fn from_vec(data: Vec<f32>, rows: usize, cols: usize) -> Result<Self> {
        if data.len() != OBS_CHANNELS * rows * cols {
            return Err(Error::Shape(format!(
                "observation needs {} values, got {}",
                OBS_CHANNELS * rows * cols,
                data.len()
            )));
        }
        Ok(Observation {
            data: data.into(),
            rows,
            cols,
        })
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn shared(&self) -> Arc<[f32]> {
        Arc::clone(&self.data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn channel(&self, k: usize) -> &[f32] {
        let n = self.rows * self.cols;
        &self.data[k * n..(k + 1) * n]
    }

    pub fn at(&self, channel: usize, row: usize, col: usize) -> f32 {
        self.data[(channel * self.rows + row) * self.cols + col]
    }
}

/// Writes the observation for `fap` and its step metrics into `out`.
pub fn encode_observation_into(
    fap: &FapPosition,
    s: &Scenario,
    m: &StepMetrics,
    area: &AreaSpec,
    delay_cap: f64,
    out: &mut [f32],
) -> Result<()> {
    let (rows, cols) = (area.rows(), area.cols());
    let plane = rows * cols;
    if out.len() != OBS_CHANNELS * plane {
        return Err(Error::Shape(format!(
            "observation buffer holds {} values, need {}",
            out.len(),
            OBS_CHANNELS * plane
        )));
    }
    if m.per_user.len() != s.users.len() {
        return Err(Error::InvalidInput(
            "metrics and scenario disagree on the number of users".into(),
        ));
    }

    let norm = (area.cov_x * area.cov_x + area.cov_y * area.cov_y + area.z_max * area.z_max).sqrt();
    let (distance, rest) = out.split_at_mut(plane);
    for row in 0..rows {
        for col in 0..cols {
            let (cx, cy) = area.zone_center_unchecked(row, col);
            distance[row * cols + col] = (fap.distance_to_ground(cx, cy) / norm).min(1.0) as f32;
        }
    }

    // Raw per-zone sums; most zones are empty so accumulate sparsely.
    let mut touched: Vec<(usize, [f64; 5])> = Vec::with_capacity(s.users.len());
    for (u, stats) in s.users.iter().zip(&m.per_user) {
        let (row, col) = area.zone_of(u.x, u.y)?;
        let idx = row * cols + col;
        let slot = match touched.iter().position(|(i, _)| *i == idx) {
            Some(p) => p,
            None => {
                touched.push((idx, [0.0; 5]));
                touched.len() - 1
            }
        };
        let acc = &mut touched[slot].1;
        acc[0] += 1.0;
        acc[1] += u.offered_load;
        acc[2] += stats.served;
        acc[3] += stats.delay;
        acc[4] += stats.plr;
    }

    rest.fill(1.0);
    let n_users = s.users.len() as f64;
    let lam = s.aggregate_load;
    let ratio = |v: f64, d: f64| if d > 0.0 { (v / d).clamp(0.0, 1.0) } else { 0.0 };
    for (idx, acc) in touched {
        let count = acc[0];
        let raw = [
            ratio(count, n_users),
            ratio(acc[1], lam),
            ratio(acc[2], lam),
            ratio(acc[3] / count, delay_cap),
            (acc[4] / count).clamp(0.0, 1.0),
        ];
        for (k, v) in raw.iter().enumerate() {
            rest[k * plane + idx] = (1.0 - v) as f32;
        }
    }
    Ok(())
}

pub fn encode_observation(
    fap: &FapPosition,
    s: &Scenario,
    m: &StepMetrics,
    area: &AreaSpec,
    delay_cap: f64,
) -> Result<Observation> {
    let mut data = vec![0f32; OBS_CHANNELS * area.rows() * area.cols()];
    encode_observation_into(fap, s, m, area, delay_cap, &mut data)?;
    Observation::from_vec(data, area.rows(), area.cols())
}

/// One of the 13 sequential moves: 0 stays, 1..=6 move one zone-step along
/// +x, -x, +y, -y, +z, -z, and 7..=12 move five zone-steps the same ways.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DiscreteAction(u8);

impl DiscreteAction {
    pub const STAY: DiscreteAction = DiscreteAction(0);

    pub fn new(code: usize) -> Result<Self> {
        if code < N_DISCRETE_ACTIONS {
            Ok(DiscreteAction(code as u8))
        } else {
            Err(Error::InvalidInput(format!(
                "discrete action code {code} outside 0..{N_DISCRETE_ACTIONS}"
            )))
        }
    }

    pub fn code(self) -> usize {
        self.0 as usize
    }

    /// Displacement in zone-steps along (x, y, z).
    pub fn delta(self) -> (i64, i64, i64) {
        if self.0 == 0 {
            return (0, 0, 0);
        }
        let dir = (self.0 - 1) % 6;
        let len = if self.0 <= 6 { 1 } else { 5 };
        match dir {
            0 => (len, 0, 0),
            1 => (-len, 0, 0),
            2 => (0, len, 0),
            3 => (0, -len, 0),
            4 => (0, 0, len),
            _ => (0, 0, -len),
        }
    }
}

/// Absolute target coordinates, each normalised to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousAction {
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
}

impl ContinuousAction {
    pub fn new(ax: f64, ay: f64, az: f64) -> Self {
        ContinuousAction { ax, ay, az }
    }

    /// Components clipped into `[0, 1]`; NaN becomes 0.
    pub fn clipped(self) -> Self {
        let clip = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        ContinuousAction::new(clip(self.ax), clip(self.ay), clip(self.az))
    }

    pub fn to_array(self) -> [f32; 3] {
        [self.ax as f32, self.ay as f32, self.az as f32]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Discrete(DiscreteAction),
    Continuous(ContinuousAction),
}

/// Lattice coordinates of the discrete mode: zone column, zone row and
/// altitude level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticePoint {
    pub col: usize,
    pub row: usize,
    pub level: usize,
}

impl LatticePoint {
    pub fn position(&self, cfg: &EnvConfig) -> FapPosition {
        let (x, y) = cfg.area.zone_center_unchecked(self.row, self.col);
        FapPosition::new(x, y, cfg.area.z_min + self.level as f64 * cfg.z_step)
    }

    /// Index in (level, row, col) order.
    pub fn index(&self, cfg: &EnvConfig) -> usize {
        (self.level * cfg.area.rows() + self.row) * cfg.area.cols() + self.col
    }

    pub fn offset(&self, action: DiscreteAction, cfg: &EnvConfig) -> Option<LatticePoint> {
        let (dx, dy, dz) = action.delta();
        let shift = |v: usize, d: i64, n: usize| -> Option<usize> {
            let next = v as i64 + d;
            (0..n as i64).contains(&next).then_some(next as usize)
        };
        Some(LatticePoint {
            col: shift(self.col, dx, cfg.area.cols())?,
            row: shift(self.row, dy, cfg.area.rows())?,
            level: shift(self.level, dz, cfg.levels())?,
        })
    }
}

/// All lattice points in index order.
pub fn lattice(cfg: &EnvConfig) -> Vec<LatticePoint> {
    let mut out = Vec::with_capacity(cfg.levels() * cfg.area.rows() * cfg.area.cols());
    for level in 0..cfg.levels() {
        for row in 0..cfg.area.rows() {
            for col in 0..cfg.area.cols() {
                out.push(LatticePoint { col, row, level });
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct EpisodeState {
    pub scenario: Arc<Scenario>,
    pub fap: FapPosition,
    /// Lattice coordinates of `fap` in discrete mode.
    pub lattice: Option<LatticePoint>,
    pub step_index: usize,
    /// Metrics of every rewarded step so far.
    pub trace: Vec<StepMetrics>,
    /// Metrics at the current position (the reset metrics before step 1).
    pub current: StepMetrics,
}

impl EpisodeState {
    pub fn done(&self, horizon: usize) -> bool {
        self.step_index >= horizon
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct Environment {
    cfg: Arc<EnvConfig>,
    mode: ActionMode,
}

impl Environment {
    pub fn new(cfg: EnvConfig, mode: ActionMode) -> Result<Self> {
        cfg.validate()?;
        Ok(Environment {
            cfg: Arc::new(cfg),
            mode,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn mode(&self) -> ActionMode {
        self.mode
    }

    pub fn simulate(&self, fap: &FapPosition, s: &Scenario) -> Result<StepMetrics> {
        let c = &self.cfg;
        simulate_step(fap, s, &c.radio, &c.queue, &c.weights)
    }

    /// Observation seen with the FAP at `fap`, running the step model there.
    pub fn observe(&self, fap: &FapPosition, s: &Scenario) -> Result<Observation> {
        let m = self.simulate(fap, s)?;
        self.encode(fap, s, &m)
    }

    pub fn observe_into(&self, fap: &FapPosition, s: &Scenario, out: &mut [f32]) -> Result<()> {
        let m = self.simulate(fap, s)?;
        encode_observation_into(fap, s, &m, &self.cfg.area, self.cfg.queue.delay_cap, out)
    }

    pub fn encode(&self, fap: &FapPosition, s: &Scenario, m: &StepMetrics) -> Result<Observation> {
        encode_observation(fap, s, m, &self.cfg.area, self.cfg.queue.delay_cap)
    }

    /// Lattice point nearest the area centre at the lowest level; ties go to
    /// the lower zone.
    pub fn initial_lattice_point(&self) -> LatticePoint {
        let a = &self.cfg.area;
        let nearest = |center: f64, n: usize| -> usize {
            let f = center / a.zone_len - 0.5;
            ((f - 0.5).ceil().max(0.0) as usize).min(n - 1)
        };
        LatticePoint {
            col: nearest(a.cov_x / 2.0, a.cols()),
            row: nearest(a.cov_y / 2.0, a.rows()),
            level: 0,
        }
    }

    pub fn reset(&self, scenario: Arc<Scenario>) -> Result<(EpisodeState, Observation)> {
        scenario.validate(&self.cfg.area)?;
        let (fap, lattice) = match self.mode {
            ActionMode::Discrete => {
                let p = self.initial_lattice_point();
                (p.position(&self.cfg), Some(p))
            }
            ActionMode::Continuous => {
                let a = &self.cfg.area;
                (FapPosition::new(a.cov_x / 2.0, a.cov_y / 2.0, a.z_min), None)
            }
        };
        let current = self.simulate(&fap, &scenario)?;
        let obs = self.encode(&fap, &scenario, &current)?;
        Ok((
            EpisodeState {
                scenario,
                fap,
                lattice,
                step_index: 0,
                trace: Vec::with_capacity(self.cfg.horizon),
                current,
            },
            obs,
        ))
    }

    pub fn mask_at(&self, p: &LatticePoint) -> [bool; N_DISCRETE_ACTIONS] {
        let mut mask = [false; N_DISCRETE_ACTIONS];
        for (code, slot) in mask.iter_mut().enumerate() {
            *slot = p.offset(DiscreteAction(code as u8), &self.cfg).is_some();
        }
        mask
    }

    pub fn valid_action_mask(&self, state: &EpisodeState) -> Result<[bool; N_DISCRETE_ACTIONS]> {
        match (self.mode, state.lattice) {
            (ActionMode::Discrete, Some(p)) => Ok(self.mask_at(&p)),
            (ActionMode::Discrete, None) => Err(Error::Contract(
                "discrete episode state has no lattice point".into(),
            )),
            (ActionMode::Continuous, _) => Err(Error::UnsupportedMode("continuous")),
        }
    }

    /// Position a continuous action maps to.
    pub fn continuous_target(&self, a: ContinuousAction) -> FapPosition {
        let a = a.clipped();
        let area = &self.cfg.area;
        FapPosition::new(
            a.ax * area.cov_x,
            a.ay * area.cov_y,
            area.z_min + a.az * (area.z_max - area.z_min),
        )
    }

    /// Moves the FAP, runs one step of the network model and returns the
    /// utility as reward.
    pub fn step(&self, state: &mut EpisodeState, action: Action) -> Result<StepOutcome> {
        if state.done(self.cfg.horizon) {
            return Err(Error::Contract(format!(
                "episode already finished after {} steps",
                state.step_index
            )));
        }
        match (self.mode, action) {
            (ActionMode::Discrete, Action::Discrete(a)) => {
                let here = state.lattice.ok_or_else(|| {
                    Error::Contract("discrete episode state has no lattice point".into())
                })?;
                let next = here.offset(a, &self.cfg).ok_or_else(|| {
                    Error::Contract(format!(
                        "action {} leaves the flight volume from {here:?}",
                        a.code()
                    ))
                })?;
                state.lattice = Some(next);
                state.fap = next.position(&self.cfg);
            }
            (ActionMode::Continuous, Action::Continuous(a)) => {
                state.fap = self.continuous_target(a);
            }
            (ActionMode::Discrete, _) => return Err(Error::UnsupportedMode("discrete")),
            (ActionMode::Continuous, _) => return Err(Error::UnsupportedMode("continuous")),
        }
        let metrics = self.simulate(&state.fap, &state.scenario)?;
        let observation = self.encode(&state.fap, &state.scenario, &metrics)?;
        let reward = metrics.utility;
        state.trace.push(metrics.clone());
        state.current = metrics;
        state.step_index += 1;
        Ok(StepOutcome {
            observation,
            reward,
            done: state.done(self.cfg.horizon),
        })
    }
}
