//! Agent checkpoint files: one weight file per network, one array file per
//! optimizer and a JSON manifest with counters and the exploration stream.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AgentConfig, AgentKind, ExplorationSchedule};
use crate::neural::{read_arrays, write_arrays, Network, RmsProp};
use crate::rng::RngState;
use crate::{Error, Result};

pub(crate) const MANIFEST_FILE: &str = "agent.json";
const MANIFEST_FORMAT: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct AgentManifest {
    pub format: u32,
    pub kind: AgentKind,
    pub config: AgentConfig,
    pub schedule: ExplorationSchedule,
    pub grad_steps: u64,
    pub rng: RngState,
}

impl AgentManifest {
    pub fn new(
        kind: AgentKind,
        config: &AgentConfig,
        schedule: &ExplorationSchedule,
        grad_steps: u64,
        rng: RngState,
    ) -> Self {
        AgentManifest {
            format: MANIFEST_FORMAT,
            kind,
            config: config.clone(),
            schedule: *schedule,
            grad_steps,
            rng,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::format("agent manifest", e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: &Path, expected: AgentKind) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: AgentManifest = serde_json::from_str(&text)
            .map_err(|e| Error::format("agent manifest", e.to_string()))?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::format(
                "agent manifest",
                format!("unsupported format {}", m.format),
            ));
        }
        if m.kind != expected {
            return Err(Error::format(
                "agent manifest",
                format!("checkpoint holds a {} agent, not {}", m.kind.name(), expected.name()),
            ));
        }
        m.config.validate()?;
        m.schedule.validate()?;
        Ok(m)
    }
}

pub(crate) fn save_net(dir: &Path, name: &str, net: &Network<f32>) -> Result<()> {
    net.save_file(&dir.join(format!("{name}.fnw")))
}

pub(crate) fn load_net(dir: &Path, name: &str) -> Result<Network<f32>> {
    Network::load_file(&dir.join(format!("{name}.fnw")))
}

pub(crate) fn save_opt(dir: &Path, name: &str, opt: &RmsProp<f32>) -> Result<()> {
    let path = dir.join(format!("{name}.opt"));
    let mut buf = Vec::new();
    write_arrays(&mut buf, &opt.accumulators)?;
    fs::write(&path, buf).map_err(|e| Error::io(&path, e))
}

pub(crate) fn load_opt(dir: &Path, name: &str, net: &Network<f32>, lr: f64) -> Result<RmsProp<f32>> {
    let path = dir.join(format!("{name}.opt"));
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let acc = read_arrays(bytes.as_slice())?;
    let shapes_match = acc.len() == net.params().len()
        && acc.iter().zip(net.params()).all(|(a, p)| a.len() == p.len());
    if !acc.is_empty() && !shapes_match {
        return Err(Error::format(
            "optimizer file",
            format!("{} does not match its network", path.display()),
        ));
    }
    let mut opt = RmsProp::new(lr);
    opt.accumulators = acc;
    Ok(opt)
}
