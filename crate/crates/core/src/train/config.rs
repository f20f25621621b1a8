use serde::{Deserialize, Serialize};

use super::adam::AdamConfig;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, CONFIG_SCHEMA_VERSION, SUPPORTED_SCALES};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LossKind {
    #[default]
    L1,
    L2,
}

/// Training recipe. Field defaults follow the published recipe except
/// `max_updates`, which every run has to choose.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub schema_version: u32,
    pub loss: LossKind,
    pub lr0: f64,
    /// Updates between learning-rate halvings.
    pub halve_every: u64,
    pub batch: usize,
    /// LR patch side; HR patches are `patch_lr · scale`.
    pub patch_lr: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Total updates, counted from step 0 also when resuming.
    pub max_updates: u64,
    pub seed: u64,
    /// Scales drawn from in multi-scale training (default: all the model has).
    pub scales: Option<Vec<u32>>,
    /// Checkpoint period in updates; a final checkpoint is always written.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            loss: LossKind::L1,
            lr0: 1e-4,
            halve_every: 200_000,
            batch: 16,
            patch_lr: 48,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_updates: 0,
            seed: 0,
            scales: None,
            checkpoint_every: 1000,
        }
    }
}

impl TrainConfig {
    /// Parses a TOML training config. `schema_version` must be present.
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table =
            toml::from_str(text).map_err(|e| Error::config(format!("train config: {e}")))?;
        match table.get("schema_version").and_then(|v| v.as_integer()) {
            Some(v) if v == CONFIG_SCHEMA_VERSION as i64 => {}
            Some(v) => {
                return Err(Error::config(format!(
                    "train config: schema_version {v} is not supported (expected {CONFIG_SCHEMA_VERSION})"
                )))
            }
            None => return Err(Error::config("train config: missing schema_version")),
        }
        let cfg: TrainConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("train config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, why: String| Err(Error::config(format!("train config: {field}: {why}")));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return fail("lr0", format!("must be positive, got {}", self.lr0));
        }
        if self.halve_every == 0 {
            return fail("halve_every", "must be positive".into());
        }
        if self.batch == 0 {
            return fail("batch", "must be positive".into());
        }
        if self.patch_lr == 0 {
            return fail("patch_lr", "must be positive".into());
        }
        for (field, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return fail(field, format!("must lie in [0, 1), got {b}"));
            }
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return fail("eps", format!("must be positive, got {}", self.eps));
        }
        if self.checkpoint_every == 0 {
            return fail("checkpoint_every", "must be positive".into());
        }
        if let Some(scales) = &self.scales {
            if scales.is_empty() || scales.iter().any(|s| !SUPPORTED_SCALES.contains(s)) {
                return fail("scales", format!("must be a non-empty subset of {SUPPORTED_SCALES:?}, got {scales:?}"));
            }
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        super::lr_at(step, self.lr0, self.halve_every)
    }

    /// Scales a run with `model` draws from.
    pub fn scales_for(&self, model: &ModelConfig) -> Result<Vec<u32>> {
        match &self.scales {
            None => Ok(model.scales.clone()),
            Some(s) => {
                if let Some(bad) = s.iter().find(|s| !model.supports(**s)) {
                    return Err(Error::config(format!(
                        "train config: scales: model has no x{bad} branch"
                    )));
                }
                Ok(s.clone())
            }
        }
    }
}
