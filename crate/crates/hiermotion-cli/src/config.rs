//! Structured run configuration: dataset generation, shared pipeline
//! hyperparameters, and the training budget. Unknown keys are rejected.

use hiermotion::pipeline::{PipelineParams, TrainConfig};
use hiermotion::synth::GenConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: GenConfig,
    pub pipeline: PipelineParams,
    pub training: TrainConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let cfg: RunConfig = serde_json::from_slice(&bytes)
            .map_err(|e| anyhow::anyhow!("invalid config {}: {e}", path.display()))?;
        Ok(cfg)
    }

    /// Returns the offending keys, if any.
    pub fn validate(&self) -> Vec<String> {
        let mut bad = Vec::new();
        if let Err(e) = self.dataset.validate() {
            bad.push(format!("dataset: {e}"));
        }
        if self.dataset.n_sequences == 0 {
            bad.push("dataset.n_sequences".to_string());
        }
        if self.training.steps == 0 {
            bad.push("training.steps".to_string());
        }
        if self.training.batch == 0 {
            bad.push("training.batch".to_string());
        }
        if !(self.training.lr > 0.0) {
            bad.push("training.lr".to_string());
        }
        if let Err(e) = self.pipeline.sensor.validate() {
            bad.push(format!("pipeline.sensor: {e}"));
        }
        if self.pipeline.n_max == 0 || self.pipeline.n_max > 64 {
            bad.push("pipeline.n_max".to_string());
        }
        if self.pipeline.beta_start <= 0.0
            || self.pipeline.beta_end < self.pipeline.beta_start
            || self.pipeline.beta_end >= 1.0
        {
            bad.push("pipeline.beta_start/beta_end".to_string());
        }
        bad
    }
}
