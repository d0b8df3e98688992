//! Scenario configuration: schema-validated JSON, unknown keys rejected.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use iprw_core::step_models::JointStepModel;
use iprw_core::verify::CenteringKind;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config does not match the schema: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Renewal,
    Simulate,
    Variance,
    Slln,
    Clt,
    Flt,
    VerifyAll,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Renewal => "renewal",
            Task::Simulate => "simulate",
            Task::Variance => "variance",
            Task::Slln => "slln",
            Task::Clt => "clt",
            Task::Flt => "flt",
            Task::VerifyAll => "verify-all",
        }
    }
}

fn default_t() -> f64 {
    50.0
}

fn default_j_max() -> u32 {
    2
}

fn default_u_points() -> Vec<f64> {
    vec![0.5, 1.0]
}

fn default_replicates() -> usize {
    2000
}

fn default_slln_paths() -> usize {
    5
}

fn default_h0() -> f64 {
    1.0
}

fn default_centering() -> CenteringKind {
    CenteringKind::GridMeans
}

/// One scenario: a model, a task and its numeric parameters. Serialized
/// form is versioned by `schema/scenario-config.v1.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: JointStepModel,
    pub task: Task,
    #[serde(default = "default_t")]
    pub t: f64,
    #[serde(default = "default_j_max")]
    pub j_max: u32,
    /// Grid step; when omitted, `min(lattice span, t_max / 1e4)`.
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default = "default_u_points")]
    pub u_points: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Checkpoints for ratio/trajectory diagnostics; default is the
    /// doubling ladder ending at `4 t`.
    #[serde(default)]
    pub t_checkpoints: Vec<f64>,
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub out_dir: Option<String>,
    #[serde(default = "default_h0")]
    pub h0: f64,
    #[serde(default = "default_centering")]
    pub centering: CenteringKind,
    #[serde(default = "default_slln_paths")]
    pub slln_paths: usize,
}

impl ScenarioConfig {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ConfigError> {
        let mut cfg: ScenarioConfig = serde_json::from_slice(bytes)?;
        cfg.fill_defaults();
        cfg.validate()?;
        Ok(cfg)
    }

    fn fill_defaults(&mut self) {
        if self.t_checkpoints.is_empty() {
            self.t_checkpoints = vec![self.t / 2.0, self.t, 2.0 * self.t, 4.0 * self.t];
        }
    }

    /// Effective grid step: explicit, or `min(lattice span, t / 1e4)` so
    /// lattice atoms always sit on grid nodes.
    pub fn grid_step(&self) -> f64 {
        self.h.unwrap_or_else(|| {
            let default = self.t / 1e4;
            match self.model.moments().lattice {
                Some(span) => span.min(default),
                None => default,
            }
        })
    }

    fn validate(&self) -> Result<(), ConfigError> {
        self.model
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.t.is_finite() && self.t > 0.0) {
            return Err(ConfigError::Invalid(format!("t must be positive, got {}", self.t)));
        }
        if self.j_max < 1 {
            return Err(ConfigError::Invalid("j_max must be at least 1".into()));
        }
        if let Some(h) = self.h {
            if !(h.is_finite() && h > 0.0 && h <= self.t) {
                return Err(ConfigError::Invalid(format!("h must lie in (0, t], got {h}")));
            }
        }
        if self.u_points.is_empty()
            || self.u_points.windows(2).any(|w| w[0] >= w[1])
            || self.u_points.iter().any(|u| !(0.0..=1.0).contains(u))
        {
            return Err(ConfigError::Invalid(
                "u_points must be sorted, strictly increasing, within [0, 1]".into(),
            ));
        }
        if self.replicates < 100 {
            return Err(ConfigError::Invalid(
                "replicates must be at least 100".into(),
            ));
        }
        if self.t_checkpoints.is_empty()
            || self.t_checkpoints.windows(2).any(|w| w[0] >= w[1])
            || self.t_checkpoints.iter().any(|t| *t <= 0.0)
        {
            return Err(ConfigError::Invalid(
                "t_checkpoints must be positive and strictly increasing".into(),
            ));
        }
        if self.h0 <= 0.0 {
            return Err(ConfigError::Invalid("h0 must be positive".into()));
        }
        if self.slln_paths < 1 {
            return Err(ConfigError::Invalid("slln_paths must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "model": {"coupling": "equal", "xi": {"family": "exponential", "rate": 1.0}},
        "task": "verify-all",
        "seed": 42
    }"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ScenarioConfig::from_bytes(MINIMAL.as_bytes()).unwrap();
        assert_eq!(cfg.task, Task::VerifyAll);
        assert_eq!(cfg.t, 50.0);
        assert_eq!(cfg.grid_step(), 50.0 / 1e4);
        assert_eq!(cfg.t_checkpoints, vec![25.0, 50.0, 100.0, 200.0]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("\"seed\": 42", "\"seed\": 42, \"tee\": 1");
        assert!(matches!(
            ScenarioConfig::from_bytes(text.as_bytes()),
            Err(ConfigError::Schema(_))
        ));
    }

    #[test]
    fn invalid_model_is_rejected() {
        let text = MINIMAL.replace("1.0", "-1.0");
        assert!(matches!(
            ScenarioConfig::from_bytes(text.as_bytes()),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn lattice_default_step_never_exceeds_the_span() {
        let text = r#"{
            "model": {"coupling": "equal", "xi": {"family": "deterministic", "value": 0.002}},
            "task": "renewal",
            "seed": 1
        }"#;
        let cfg = ScenarioConfig::from_bytes(text.as_bytes()).unwrap();
        assert_eq!(cfg.grid_step(), 0.002);

        let text = r#"{
            "model": {"coupling": "equal", "xi": {"family": "deterministic", "value": 1.0}},
            "task": "renewal",
            "seed": 1
        }"#;
        let cfg = ScenarioConfig::from_bytes(text.as_bytes()).unwrap();
        assert_eq!(cfg.grid_step(), 50.0 / 1e4);
    }
}
