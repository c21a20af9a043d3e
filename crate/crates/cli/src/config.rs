//! Experiment configuration: JSON text with unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use slowfast::simulate::{catalog, ModelParams};

use crate::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Average,
    Filter,
    CompareFilters,
    Estimate,
    Mpp,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Average => "average",
            Self::Filter => "filter",
            Self::CompareFilters => "compare-filters",
            Self::Estimate => "estimate",
            Self::Mpp => "mpp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub xmin: f64,
    pub xmax: f64,
    pub nx: usize,
}

mod defaults {
    use super::GridConfig;

    pub fn alpha() -> f64 {
        1.5
    }
    pub fn epsilon() -> f64 {
        0.01
    }
    pub fn theta0() -> f64 {
        1.0
    }
    pub fn p() -> f64 {
        1.25
    }
    pub fn dt() -> f64 {
        0.001
    }
    pub fn horizon() -> f64 {
        1.0
    }
    pub fn paths() -> usize {
        100
    }
    pub fn particles() -> usize {
        1000
    }
    pub fn trials() -> usize {
        100
    }
    pub fn grid() -> GridConfig {
        GridConfig {
            xmin: -3.0,
            xmax: 3.0,
            nx: 300,
        }
    }
    pub fn theta_domain() -> Vec<[f64; 2]> {
        vec![[0.1, 100.0]]
    }
    pub fn output_dir() -> std::path::PathBuf {
        "out".into()
    }
    pub fn x0() -> f64 {
        1.0
    }
    pub fn prior_sd() -> f64 {
        0.1
    }
    pub fn observations() -> usize {
        100
    }
    pub fn epsilons() -> Vec<f64> {
        vec![0.1, 0.03, 0.01]
    }
    pub fn restarts() -> usize {
        5
    }
    pub fn budget() -> usize {
        50
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    pub model: String,
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    #[serde(default = "defaults::epsilon")]
    pub epsilon: f64,
    /// True drift parameter (ignored by models without one).
    #[serde(default = "defaults::theta0")]
    pub theta0: f64,
    #[serde(default = "defaults::p")]
    pub p: f64,
    /// Simulation step upper bound.
    #[serde(default = "defaults::dt")]
    pub dt: f64,
    #[serde(rename = "T", default = "defaults::horizon")]
    pub horizon: f64,
    #[serde(rename = "M", default = "defaults::paths")]
    pub paths: usize,
    #[serde(rename = "K", default = "defaults::particles")]
    pub particles: usize,
    #[serde(default = "defaults::trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::grid")]
    pub grid: GridConfig,
    /// One `[lower, upper]` interval per parameter.
    #[serde(default = "defaults::theta_domain")]
    pub theta_domain: Vec<[f64; 2]>,
    #[serde(default = "defaults::output_dir")]
    pub output_dir: PathBuf,
    /// Initial slow state (also the prior mean of filters).
    #[serde(default = "defaults::x0")]
    pub x0: f64,
    #[serde(default = "defaults::prior_sd")]
    pub prior_sd: f64,
    /// Number of observation intervals over `T`.
    #[serde(default = "defaults::observations")]
    pub observations: usize,
    /// Epsilon sweep for `compare-filters`.
    #[serde(default = "defaults::epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "defaults::restarts")]
    pub restarts: usize,
    /// Nelder-Mead iteration budget per restart.
    #[serde(default = "defaults::budget")]
    pub budget: usize,
}

fn invalid(field: &str, message: impl Into<String>) -> RunError {
    RunError::Validation {
        field: field.to_string(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            // serde reports the offending key inside backticks.
            let field = msg.split('`').nth(1).unwrap_or("config").to_string();
            RunError::Validation { field, message: msg }
        })
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid("config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn preset(name: &str) -> Result<Self, RunError> {
        match name {
            // θ = 9, ε = 0.01, α = 1.9, Θ = (0, 100), M = 1000.
            "fig1" => Ok(Self {
                command: Command::Estimate,
                model: "example1".into(),
                alpha: 1.9,
                epsilon: 0.01,
                theta0: 9.0,
                p: 1.5,
                dt: 0.001,
                horizon: 1.0,
                paths: 1000,
                particles: defaults::particles(),
                trials: defaults::trials(),
                seed: 0,
                grid: defaults::grid(),
                theta_domain: vec![[0.1, 100.0]],
                output_dir: defaults::output_dir(),
                x0: 1.0,
                prior_sd: defaults::prior_sd(),
                observations: 100,
                epsilons: defaults::epsilons(),
                restarts: 5,
                budget: 50,
            }),
            // X0 = X̄0 = 1, ε = 0.01, α = 1.5.
            "fig2" => Ok(Self {
                command: Command::Mpp,
                model: "example2".into(),
                alpha: 1.5,
                epsilon: 0.01,
                theta0: defaults::theta0(),
                p: defaults::p(),
                dt: 0.0005,
                horizon: 2.0,
                paths: 1,
                particles: 2000,
                trials: defaults::trials(),
                seed: 0,
                grid: defaults::grid(),
                theta_domain: defaults::theta_domain(),
                output_dir: defaults::output_dir(),
                x0: 1.0,
                prior_sd: 0.1,
                observations: 800,
                epsilons: defaults::epsilons(),
                restarts: defaults::restarts(),
                budget: defaults::budget(),
            }),
            other => Err(invalid("preset", format!("unknown preset `{other}` (expected fig1 or fig2)"))),
        }
    }

    /// Checks every field against the preconditions of the pipeline it feeds.
    pub fn validate(&self) -> Result<(), RunError> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(field, format!("must be positive and finite, got {v}")))
            }
        };
        if !(self.alpha > 1.0 && self.alpha < 2.0) {
            return Err(invalid("alpha", format!("stability index {} not in (1, 2)", self.alpha)));
        }
        positive("epsilon", self.epsilon)?;
        positive("dt", self.dt)?;
        positive("T", self.horizon)?;
        positive("prior_sd", self.prior_sd)?;
        if !self.theta0.is_finite() {
            return Err(invalid("theta0", "must be finite"));
        }
        if !self.x0.is_finite() {
            return Err(invalid("x0", "must be finite"));
        }
        if !(self.p > 1.0 && self.p < self.alpha) {
            return Err(invalid("p", format!("moment exponent {} not in (1, alpha = {})", self.p, self.alpha)));
        }
        if self.paths == 0 {
            return Err(invalid("M", "need at least one path"));
        }
        if self.particles == 0 {
            return Err(invalid("K", "need at least one particle"));
        }
        if self.observations == 0 {
            return Err(invalid("observations", "need at least one observation interval"));
        }
        if self.restarts == 0 {
            return Err(invalid("restarts", "need at least one restart"));
        }
        if self.budget == 0 {
            return Err(invalid("budget", "need at least one iteration"));
        }
        let g = &self.grid;
        if !(g.xmin.is_finite() && g.xmax.is_finite() && g.xmax > g.xmin) {
            return Err(invalid("grid.xmax", "grid needs finite xmin < xmax"));
        }
        if g.nx < 2 {
            return Err(invalid("grid.nx", "grid needs at least 2 nodes"));
        }
        if self.theta_domain.is_empty() {
            return Err(invalid("theta_domain", "need at least one interval"));
        }
        for (i, [lo, hi]) in self.theta_domain.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(invalid(&format!("theta_domain[{i}]"), "need finite lower < upper"));
            }
        }
        if self.command == Command::CompareFilters {
            if self.trials < 100 {
                return Err(invalid("trials", format!("{} trials, need at least 100", self.trials)));
            }
            if self.epsilons.len() < 2 {
                return Err(invalid("epsilons", "need at least two epsilons for a trend"));
            }
            for (i, e) in self.epsilons.iter().enumerate() {
                positive(&format!("epsilons[{i}]"), *e)?;
            }
        }
        let system = catalog(
            &self.model,
            &ModelParams {
                alpha: self.alpha,
                epsilon: self.epsilon,
            },
        )
        .map_err(|e| invalid("model", e.to_string()))?;
        if system.theta_dim > 0 {
            let [lo, hi] = self.theta_domain[0];
            if self.command == Command::Estimate && !(self.theta0 >= lo && self.theta0 <= hi) {
                return Err(invalid("theta0", format!("{} outside theta_domain [{lo}, {hi}]", self.theta0)));
            }
        }
        if self.command == Command::Estimate && system.theta_dim != self.theta_domain.len() {
            return Err(invalid(
                "theta_domain",
                format!("model has {} parameters, domain has {}", system.theta_dim, self.theta_domain.len()),
            ));
        }
        let needs_sensor = matches!(self.command, Command::Filter | Command::CompareFilters | Command::Mpp);
        if needs_sensor && system.sensor.is_none() {
            return Err(invalid("model", format!("`{}` has no observation channel", self.model)));
        }
        Ok(())
    }

    /// Parameter vector for the model: `theta0` if it takes one.
    pub fn theta(&self, dim: usize) -> Vec<f64> {
        vec![self.theta0; dim]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for name in ["fig1", "fig2"] {
            let c = ExperimentConfig::preset(name).unwrap();
            c.validate().unwrap();
            assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = ExperimentConfig::from_json(r#"{"command": "estimate", "model": "example1", "epsilom": 0.1}"#)
            .unwrap_err();
        assert!(matches!(e, RunError::Validation { ref field, .. } if field == "epsilom"), "{e:?}");
    }

    #[test]
    fn negative_epsilon_names_the_field() {
        let c = ExperimentConfig::from_json(r#"{"command": "simulate", "model": "example1", "epsilon": -1}"#).unwrap();
        let e = c.validate().unwrap_err();
        assert!(matches!(e, RunError::Validation { ref field, .. } if field == "epsilon"));
    }

    #[test]
    fn defaults_fill_missing_fields() {
        let c = ExperimentConfig::from_json(r#"{"command": "mpp", "model": "example2"}"#).unwrap();
        assert_eq!(c.grid, defaults::grid());
        assert_eq!(c.horizon, 1.0);
        c.validate().unwrap();
    }

    #[test]
    fn model_without_sensor_cannot_be_filtered() {
        let c = ExperimentConfig::from_json(r#"{"command": "filter", "model": "example1"}"#).unwrap();
        assert!(c.validate().is_err());
    }
}
