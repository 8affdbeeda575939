use crate::error::{CliError, CliResult};
use serde::Deserialize;
use snsm::ecm::EcmConfig;
use snsm::gmm::GmmConfig;
use snsm::sample::AltCase;
use snsm::sim::{ScenarioSpec, DEFAULT_MU};
use std::path::Path;

/// Solver overrides and scenario matrix read from a TOML file.
///
/// ```toml
/// [ecm]
/// starts = 3
/// [ecm.npmle]
/// grid_size = 150
///
/// [[scenario]]
/// case = "V"
/// pi = 0.5
/// n = 1000
/// replications = 50
/// ```
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub ecm: EcmConfig,
    pub gmm: GmmConfig,
    pub scenario: Vec<ScenarioEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEntry {
    pub case: AltCase,
    pub pi: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    pub n: usize,
    pub replications: usize,
}

fn default_mu() -> f64 {
    DEFAULT_MU
}

impl ScenarioEntry {
    pub fn spec(&self, base_seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            case: self.case,
            pi: self.pi,
            mu: self.mu,
            n: self.n,
            replications: self.replications,
            base_seed,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let cfg: RunConfig = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                toml::from_str(&text).map_err(|e| CliError::parse(p, e.to_string()))?
            }
        };
        cfg.ecm.validate().map_err(|e| CliError::Config(e.to_string()))?;
        cfg.gmm.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}
