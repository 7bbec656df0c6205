//! Scenario configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::oracle::OracleConfig;
use crate::params::{EpidemicParams, SolverOptions};

fn default_step() -> f64 {
    0.01
}

fn default_tol() -> f64 {
    1e-6
}

fn default_resolution() -> [usize; 2] {
    [100, 100]
}

fn default_refinements() -> usize {
    2
}

/// One JSON document describing a scenario. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub gamma: f64,
    pub sigma_s: f64,
    pub sigma_f: f64,
    #[serde(rename = "horizon_T")]
    pub horizon: f64,
    pub tau: f64,
    #[serde(rename = "cap_K")]
    pub cap: f64,
    pub x0: f64,
    pub y0: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_tol")]
    pub event_tol: f64,
    #[serde(default = "default_tol")]
    pub root_tol: f64,
    #[serde(default = "default_resolution")]
    pub oracle_resolution: [usize; 2],
    #[serde(default = "default_refinements")]
    pub oracle_refinements: usize,
    /// Lattice of each zoom level; defaults to `oracle_resolution`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_refine_resolution: Option<[usize; 2]>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let cfg: ScenarioConfig =
            serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })?;
        Ok(cfg)
    }

    pub fn from_params(params: &EpidemicParams) -> Self {
        ScenarioConfig {
            gamma: params.gamma,
            sigma_s: params.sigma_s,
            sigma_f: params.sigma_f,
            horizon: params.horizon,
            tau: params.tau,
            cap: params.cap,
            x0: params.x0,
            y0: params.y0,
            step: default_step(),
            event_tol: default_tol(),
            root_tol: default_tol(),
            oracle_resolution: default_resolution(),
            oracle_refinements: default_refinements(),
            oracle_refine_resolution: None,
            output_dir: None,
        }
    }

    pub fn params(&self) -> EpidemicParams {
        EpidemicParams {
            gamma: self.gamma,
            sigma_s: self.sigma_s,
            sigma_f: self.sigma_f,
            horizon: self.horizon,
            tau: self.tau,
            cap: self.cap,
            x0: self.x0,
            y0: self.y0,
        }
    }

    pub fn options(&self) -> SolverOptions {
        SolverOptions { step: self.step, event_tol: self.event_tol, root_tol: self.root_tol }
    }

    pub fn oracle(&self) -> OracleConfig {
        let res = (self.oracle_resolution[0], self.oracle_resolution[1]);
        let zoom = self.oracle_refine_resolution.map_or(res, |[a, b]| (a, b));
        OracleConfig { resolution: res, refinements: self.oracle_refinements, refine_resolution: zoom, ..Default::default() }
    }

    /// Schema-level checks that do not depend on the problem being feasible.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.options().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.oracle_resolution.iter().chain(self.oracle_refine_resolution.iter().flatten()).any(|&n| n < 2) {
            return Err(ConfigError::Invalid("oracle lattice sizes must be at least 2".into()));
        }
        match self.params().validate() {
            Err(crate::Error::InvalidParams(m)) => Err(ConfigError::Invalid(m)),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"gamma":0.1,"sigma_s":0.8,"sigma_f":1.5,"horizon_T":365,"tau":40,"cap_K":0.03,"x0":0.999999,"y0":0.000001}"#;

    #[test]
    fn defaults_are_applied() {
        let cfg: ScenarioConfig = serde_json::from_str(MINIMAL).unwrap();
        assert_eq!(cfg.step, 0.01);
        assert_eq!(cfg.event_tol, 1e-6);
        assert_eq!(cfg.oracle_resolution, [100, 100]);
        assert_eq!(cfg.oracle_refinements, 2);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("\"gamma\"", "\"gama\":1,\"gamma\"");
        assert!(serde_json::from_str::<ScenarioConfig>(&text).is_err());
    }

    #[test]
    fn missing_keys_are_rejected() {
        let text = MINIMAL.replace(",\"tau\":40", "");
        assert!(serde_json::from_str::<ScenarioConfig>(&text).is_err());
    }

    #[test]
    fn bad_values_are_rejected() {
        let mut cfg: ScenarioConfig = serde_json::from_str(MINIMAL).unwrap();
        cfg.step = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg: ScenarioConfig = serde_json::from_str(MINIMAL).unwrap();
        cfg.sigma_s = 2.0;
        assert!(cfg.validate().is_err());
    }
}
