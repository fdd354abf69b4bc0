use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::gridpix::Scenario;
use crate::netcore::NetConfig;
use crate::rollout::{ActionSelection, RolloutConfig};
use crate::tdcore::{LossWeights, TdaeSpec};
use crate::tensorgrad::RmsPropConfig;

use super::ExpError;

/// Axes of a sweep. Empty axes keep the base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepAxes {
    pub lambda_tdae: Vec<f64>,
    pub gamma_aux: Vec<f64>,
    pub segment_length: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        self.lambda_tdae.is_empty() && self.gamma_aux.is_empty() && self.segment_length.is_empty() && self.seeds.is_empty()
    }
}

fn default_gamma() -> f64 {
    0.99
}

fn default_eval_episodes() -> usize {
    50
}

fn default_true() -> bool {
    true
}

/// A complete, strictly parsed run specification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub scenario: Scenario,
    #[serde(default)]
    pub network: NetConfig,
    #[serde(default)]
    pub rollout: RolloutConfig,
    /// Policy discount.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub loss_weights: LossWeights,
    /// One TD-AE head per entry.
    #[serde(default)]
    pub auxiliary: Vec<TdaeSpec>,
    #[serde(default)]
    pub optimizer: RmsPropConfig,
    pub total_frames: u64,
    pub eval_every_frames: u64,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default)]
    pub eval_action_selection: ActionSelection,
    #[serde(default = "default_true")]
    pub checkpoint_at_eval: bool,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "SweepAxes::is_empty")]
    pub sweep: SweepAxes,
}

impl ExperimentConfig {
    /// Desk-scale defaults for a scenario: 300k frames, evaluation every 25k
    /// frames, ten seeds.
    pub fn desk(name: &str, scenario: Scenario, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            name: name.into(),
            scenario,
            network: NetConfig::default(),
            rollout: RolloutConfig { workers: 8, segment_length: 16, ..RolloutConfig::default() },
            gamma: default_gamma(),
            loss_weights: LossWeights::default(),
            auxiliary: Vec::new(),
            optimizer: RmsPropConfig::default(),
            total_frames: 300_000,
            eval_every_frames: 25_000,
            eval_episodes: default_eval_episodes(),
            eval_action_selection: ActionSelection::Sample,
            checkpoint_at_eval: true,
            seeds: (0..10).collect(),
            output_dir: output_dir.into(),
            sweep: SweepAxes::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ExpError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| ExpError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExpError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExpError::io(path, e))?;
        Self::from_json(&text).map_err(|e| ExpError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ExpError> {
        let bad = |msg: String| Err(ExpError::Config(msg));
        self.scenario.validate()?;
        self.rollout.validate()?;
        for spec in &self.auxiliary {
            spec.validate()?;
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if self.total_frames == 0 || self.eval_every_frames == 0 {
            return bad("total_frames and eval_every_frames must be positive".into());
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes must be positive".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0 && (0.0..1.0).contains(&o.decay) && o.epsilon > 0.0 && o.clip_norm > 0.0) {
            return bad(format!("invalid optimizer settings {o:?}"));
        }
        Ok(())
    }

    /// Number of updates needed to reach `total_frames`.
    pub fn updates(&self) -> u64 {
        let per = self.rollout.transitions_per_update() as u64;
        self.total_frames.div_ceil(per)
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.output_dir.join(format!("seed_{seed}"))
    }
}
