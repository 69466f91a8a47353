//! Run configuration file.
//!
//! The file is TOML. Every key is optional; missing keys take the defaults
//! shown by `fapnet config`, unknown keys are rejected. `schema_version`
//! must match [`SCHEMA_VERSION`] when present.

use std::path::{Path, PathBuf};

use fapnet_core::{AgentConfig, AgentKind, EnvConfig, ExplorationSchedule, HarnessConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::Value;

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Users per scenario.
    pub users: usize,
    /// Aggregate offered load, bit/s.
    pub aggregate_load: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            users: 3,
            aggregate_load: 40e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    pub ddqn: AgentConfig,
    pub ddpg: AgentConfig,
    pub epsilon: ExplorationSchedule,
    pub noise: ExplorationSchedule,
}

impl Default for AgentSection {
    fn default() -> Self {
        AgentSection {
            ddqn: AgentConfig::ddqn(),
            ddpg: AgentConfig::ddpg(),
            epsilon: ExplorationSchedule::epsilon_greedy(),
            noise: ExplorationSchedule::gaussian_noise(),
        }
    }
}

impl AgentSection {
    pub fn config(&self, kind: AgentKind) -> &AgentConfig {
        match kind {
            AgentKind::Ddqn => &self.ddqn,
            AgentKind::Ddpg => &self.ddpg,
        }
    }

    pub fn schedule(&self, kind: AgentKind) -> ExplorationSchedule {
        match kind {
            AgentKind::Ddqn => self.epsilon,
            AgentKind::Ddpg => self.noise,
        }
    }
}

/// Output locations, relative to the output directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub scenarios: PathBuf,
    pub runs: PathBuf,
    pub results: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            scenarios: "scenarios".into(),
            runs: "runs".into(),
            results: "results".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Master seed; every random stream derives from it.
    pub seed: u64,
    pub scenarios: ScenarioConfig,
    pub env: EnvConfig,
    pub agent: AgentSection,
    pub harness: HarnessConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            seed: 1,
            scenarios: ScenarioConfig::default(),
            env: EnvConfig::default(),
            agent: AgentSection::default(),
            harness: HarnessConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    /// Parses a possibly partial TOML document over the defaults.
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let user: Value = text
            .parse::<toml::Table>()
            .map(Value::Table)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let mut merged = Value::try_from(RunConfig::default())
            .map_err(|e| CliError::Runtime(format!("default config: {e}")))?;
        merge(&mut merged, user);
        let cfg: RunConfig = merged
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.scenarios.users == 0 {
            return Err(CliError::Config("scenarios.users must be at least 1".into()));
        }
        if !(self.scenarios.aggregate_load >= 1.0 && self.scenarios.aggregate_load.is_finite()) {
            return Err(CliError::Config(format!(
                "scenarios.aggregate_load must be at least 1 bit/s, got {}",
                self.scenarios.aggregate_load
            )));
        }
        self.env.validate()?;
        self.agent.ddqn.validate()?;
        self.agent.ddpg.validate()?;
        if !matches!(self.agent.epsilon, ExplorationSchedule::EpsilonGreedy { .. }) {
            return Err(CliError::Config("agent.epsilon must be an epsilon_greedy schedule".into()));
        }
        if !matches!(self.agent.noise, ExplorationSchedule::GaussianNoise { .. }) {
            return Err(CliError::Config("agent.noise must be a gaussian_noise schedule".into()));
        }
        self.agent.epsilon.validate()?;
        self.agent.noise.validate()?;
        self.harness.validate()?;
        Ok(())
    }

    /// Canonical TOML of the effective configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises to TOML")
    }

    /// SHA-256 of [`RunConfig::to_toml`], hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Overlays `over` onto `base`. Tables merge key by key; a tagged table whose
/// `kind` changes replaces the default wholesale.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Table(b), Value::Table(o)) => {
            let kind_changed = matches!((b.get("kind"), o.get("kind")), (Some(x), Some(y)) if x != y);
            if kind_changed {
                *b = o;
                return;
            }
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
