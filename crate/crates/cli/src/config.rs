use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Rejected configuration (maps to exit code 2).
#[derive(Debug, Error)]
#[error("invalid config: {0}")]
pub struct ConfigError(pub String);

/// Settings shared by all subcommands. Every field has a default, so a config
/// file only needs the fields it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Monte Carlo replicates per estimate.
    pub replicates: usize,
    /// Step floor of the simulation grids.
    pub dt: f64,
    pub alpha_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub eps_grid: Vec<f64>,
    /// `(b0, s0, b̃0, s̃0)` for the reflection/synchronized coupling.
    pub start: [f64; 4],
    /// `(x, l)` of the driver and the delayed copy in the delay demo.
    pub delay_start: [f64; 2],
    pub delay_start_hat: [f64; 2],
    pub delay_horizon: f64,
    /// `(x, y)` of the two BKR diffusions.
    pub bkr_start: [f64; 2],
    pub bkr_start_hat: [f64; 2],
    pub bkr_runs: usize,
    /// Number of calibrated stages for the staged couplings.
    pub stages: usize,
    /// Time limit of recorded sample paths.
    pub path_horizon: f64,
    pub output_dir: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            replicates: 10_000,
            dt: 1e-4,
            alpha_grid: vec![0.25, 1.0, 4.0],
            t_grid: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            eps_grid: vec![0.02, 0.05, 0.1],
            start: [1.0, 1.0, 0.0, 0.0],
            delay_start: [0.0, 0.5],
            delay_start_hat: [0.0, 0.0],
            delay_horizon: 1.0,
            bkr_start: [0.6, 0.4],
            bkr_start_hat: [-0.3, 0.9],
            bkr_runs: 200,
            stages: 5,
            path_horizon: 10.0,
            output_dir: None,
        }
    }
}

fn positive_grid(name: &str, grid: &[f64]) -> Result<(), ConfigError> {
    if grid.is_empty() {
        return Err(ConfigError(format!("{name} must not be empty")));
    }
    if let Some(v) = grid.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(ConfigError(format!("{name} must be positive and finite, found {v}")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        positive_grid("alpha_grid", &self.alpha_grid)?;
        positive_grid("t_grid", &self.t_grid)?;
        positive_grid("eps_grid", &self.eps_grid)?;
        if let Some(e) = self.eps_grid.iter().find(|e| **e >= 0.5) {
            return Err(ConfigError(format!("eps_grid values must lie in (0, 1/2), found {e}")));
        }
        if self.replicates == 0 || self.bkr_runs == 0 {
            return Err(ConfigError("replicates and bkr_runs must be positive".into()));
        }
        if self.stages == 0 || self.stages > 8 {
            return Err(ConfigError("stages must lie in 1..=8".into()));
        }
        for (name, v) in [("dt", self.dt), ("delay_horizon", self.delay_horizon), ("path_horizon", self.path_horizon)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError(format!("{name} must be positive and finite, found {v}")));
            }
        }
        let all = self
            .start
            .iter()
            .chain(&self.delay_start)
            .chain(&self.delay_start_hat)
            .chain(&self.bkr_start)
            .chain(&self.bkr_start_hat);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(ConfigError("initial conditions must be finite".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut c = self.clone();
        c.output_dir = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_json() {
        let mut c = ExperimentConfig::default();
        c.dt = 0.1 + 0.2;
        c.alpha_grid = vec![1.0 / 3.0, 2.5e-7];
        c.output_dir = Some("x".into());
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_configs_use_defaults() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"seed": 9}"#).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.replicates, ExperimentConfig::default().replicates);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"sed": 9}"#).is_err());
    }

    #[test]
    fn grids_are_checked() {
        let mut c = ExperimentConfig::default();
        assert!(c.validate().is_ok());
        c.alpha_grid = vec![1.0, 0.0];
        assert!(c.validate().is_err());
        c.alpha_grid = vec![];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.eps_grid = vec![0.6];
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
    }
}
