//! Traffic-aware placement of a flying Wi-Fi access point (FAP).
//!
//! The crate is organised bottom-up:
//!
//! * [`scenario`]: coverage volume, zone grid, random scenario generation and
//!   the heterogeneity index.
//! * [`linknet`]: deterministic per-step network model (Friis link budget,
//!   ideal rate adaptation, airtime-sharing fluid MAC) producing throughput,
//!   delay and packet loss, combined into the network utility.
//! * [`env`]: the reinforcement-learning environment: zone-grid observations,
//!   discrete (masked) and continuous action spaces, per-step reward.
//! * [`neural`]: a small CPU neural-network stack with exact backpropagation.
//! * [`agents`]: Double DQN and DDPG agents, replay buffer, exploration.
//! * [`harness`]: training strategies, baseline and brute-force oracle
//!   placements, evaluation statistics and result files.

pub mod agents;
pub mod env;
pub mod error;
pub mod harness;
pub mod linknet;
pub mod neural;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};

pub use env::{
    Action, ActionMode, ContinuousAction, DiscreteAction, EnvConfig, Environment, EpisodeState,
    Observation,
};
pub use agents::{
    AgentConfig, AgentKind, DdpgAgent, DdqnAgent, Experience, ExplorationSchedule, ReplayBuffer,
    Transition,
};
pub use harness::{EpisodeResult, HarnessConfig, Strategy};
pub use linknet::{QueueParams, RadioParams, StepMetrics, UserLinkStats, UtilityWeights};
pub use neural::{Network, NetworkParams, RmsProp, Tensor};
pub use scenario::{AreaSpec, FapPosition, Scenario, UserSpec};
