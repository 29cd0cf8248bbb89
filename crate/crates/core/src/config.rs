//! Model dimensions and the aggregate run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricsConfig;
use crate::scenario::ScenarioConfig;
use crate::tracker::TrackerConfig;
use crate::train::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub descriptor_dim: usize,
    pub appearance_dim: usize,
    pub motion_dim: usize,
    pub encoder_hidden: usize,
    pub head_hidden: usize,
    /// Embedding width `C` of the message-passing layer.
    pub gnn_dim: usize,
    pub relation_hidden: usize,
    /// Tracklet length `L` fed to the LSTM.
    pub tracklet_len: usize,
    /// Width and height used to normalize box coordinates.
    pub arena: [f64; 2],
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            descriptor_dim: 16,
            appearance_dim: 32,
            motion_dim: 32,
            encoder_hidden: 32,
            head_hidden: 64,
            gnn_dim: 64,
            relation_hidden: 64,
            tracklet_len: 5,
            arena: [1.0, 1.0],
            init_seed: 7,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("descriptor_dim", self.descriptor_dim),
            ("appearance_dim", self.appearance_dim),
            ("motion_dim", self.motion_dim),
            ("encoder_hidden", self.encoder_hidden),
            ("head_hidden", self.head_hidden),
            ("gnn_dim", self.gnn_dim),
            ("relation_hidden", self.relation_hidden),
            ("tracklet_len", self.tracklet_len),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::invalid(format!("model.{name} must be positive")));
            }
        }
        if !self.arena.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::invalid("model.arena must be positive and finite"));
        }
        Ok(())
    }

    /// Small dimensions for fast finite-difference checks.
    pub fn tiny() -> Self {
        Self {
            descriptor_dim: 4,
            appearance_dim: 3,
            motion_dim: 3,
            encoder_hidden: 4,
            head_hidden: 4,
            gnn_dim: 4,
            relation_hidden: 4,
            tracklet_len: 3,
            ..Self::default()
        }
    }
}

/// Everything a CLI run can be configured with, loadable from one JSON file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub tracker: TrackerConfig,
    pub metrics: MetricsConfig,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.tracker.validate()?;
        self.metrics.validate()?;
        if self.model.descriptor_dim != self.scenario.descriptor_dim {
            return Err(Error::invalid(format!(
                "model.descriptor_dim {} differs from scenario.descriptor_dim {}",
                self.model.descriptor_dim, self.scenario.descriptor_dim
            )));
        }
        Ok(())
    }

    /// Applies a seed override to every seeded component.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.scenario.seed = seed;
        self.train.seed = seed;
        self.model.init_seed = seed;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn json_round_trip() {
        let cfg = RunConfig::default().with_seed(42);
        let back: RunConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.scenario.seed, 42);
        assert_eq!(back.model.init_seed, 42);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"modle": {}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"train": {"lr": 1}}"#).is_err());
    }

    #[test]
    fn descriptor_widths_must_agree() {
        let mut cfg = RunConfig::default();
        cfg.model.descriptor_dim = 8;
        assert!(cfg.validate().is_err());
        cfg.scenario.descriptor_dim = 8;
        cfg.validate().unwrap();
    }

    #[test]
    fn zero_dimension_is_invalid() {
        let cfg = ModelConfig {
            gnn_dim: 0,
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn load_reports_missing_file() {
        assert!(RunConfig::load("/nonexistent/run.json").is_err());
    }
}
