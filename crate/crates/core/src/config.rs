//! Single-document JSON configuration. Every section is optional and
//! falls back to its defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bev::BevConfig;
use crate::error::{Error, Result};
use crate::grid::GridConfig;
use crate::planner::PlannerParams;
use crate::reach::ReachConfig;
use crate::realtime::NoiseModel;
use crate::sim::{RewardConfig, SimConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub planner: PlannerParams,
    pub grid: GridConfig,
    pub noise: NoiseModel,
    pub bev: BevConfig,
    pub sim: SimConfig,
    pub reward: RewardConfig,
}

impl Config {
    pub fn from_json(text: &str, context: &str) -> Result<Config> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| Error::from_json(context, &e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Config> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.planner.validate()?;
        self.grid.validate()?;
        self.noise.validate()?;
        self.bev.validate()?;
        self.sim_config().validate()
    }

    pub fn reach(&self) -> ReachConfig {
        ReachConfig {
            planner: self.planner.clone(),
            grid: self.grid.clone(),
        }
    }

    /// The simulator settings with the top-level reward section applied.
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            reward: self.reward,
            ..self.sim.clone()
        }
    }
}
