use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SUPPORTED_SCALES: [u32; 3] = [2, 3, 4];

/// Version of the model and training config file schema.
pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// One upscaling factor per network (EDSR).
    Single,
    /// Shared trunk with per-scale heads and upsamplers (MDSR).
    Multi,
}

/// Architecture descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Residual blocks in the shared trunk.
    pub num_blocks: usize,
    /// Feature channels.
    pub num_feats: usize,
    pub scales: Vec<u32>,
    /// Multiplier applied to each residual branch before the skip add.
    pub res_scale: f32,
    /// Dataset mean colour in the 0–255 domain.
    pub rgb_mean: [f32; 3],
    #[serde(default = "default_trunk_kernel")]
    pub trunk_kernel: usize,
    /// Kernel of the per-scale pre-processing blocks in the multi-scale net.
    #[serde(default = "default_head_kernel_multi")]
    pub head_kernel_multi: usize,
}

fn default_trunk_kernel() -> usize {
    3
}

fn default_head_kernel_multi() -> usize {
    5
}

/// Residual scaling is only used for the wide (256-channel) model.
pub fn default_res_scale(num_feats: usize) -> f32 {
    if num_feats >= 256 {
        0.1
    } else {
        1.0
    }
}

impl ModelConfig {
    pub fn single(num_blocks: usize, num_feats: usize, scale: u32) -> Self {
        ModelConfig {
            kind: ModelKind::Single,
            num_blocks,
            num_feats,
            scales: vec![scale],
            res_scale: default_res_scale(num_feats),
            rgb_mean: [0.0; 3],
            trunk_kernel: default_trunk_kernel(),
            head_kernel_multi: default_head_kernel_multi(),
        }
    }

    pub fn multi(num_blocks: usize, num_feats: usize) -> Self {
        ModelConfig {
            kind: ModelKind::Multi,
            scales: SUPPORTED_SCALES.to_vec(),
            ..ModelConfig::single(num_blocks, num_feats, 2)
        }
    }

    pub fn with_rgb_mean(mut self, rgb_mean: [f32; 3]) -> Self {
        self.rgb_mean = rgb_mean;
        self
    }

    pub fn with_res_scale(mut self, res_scale: f32) -> Self {
        self.res_scale = res_scale;
        self
    }

    pub fn supports(&self, scale: u32) -> bool {
        self.scales.contains(&scale)
    }

    /// The single configured scale of a single-scale model.
    pub fn single_scale(&self) -> Option<u32> {
        match (self.kind, self.scales.as_slice()) {
            (ModelKind::Single, [s]) => Some(*s),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_feats == 0 {
            return Err(Error::config("num_feats must be positive"));
        }
        if let Some(s) = self.scales.iter().find(|s| !SUPPORTED_SCALES.contains(s)) {
            return Err(Error::config(format!("unsupported scale {s}")));
        }
        match self.kind {
            ModelKind::Single if self.scales.len() != 1 => {
                return Err(Error::config(format!(
                    "single-scale model needs exactly one scale, got {:?}",
                    self.scales
                )));
            }
            ModelKind::Multi => {
                let mut s = self.scales.clone();
                s.sort_unstable();
                if s != SUPPORTED_SCALES {
                    return Err(Error::config(format!(
                        "multi-scale model needs scales [2, 3, 4], got {:?}",
                        self.scales
                    )));
                }
            }
            _ => {}
        }
        if !(self.res_scale > 0.0 && self.res_scale <= 1.0) {
            return Err(Error::config(format!(
                "res_scale must lie in (0, 1], got {}",
                self.res_scale
            )));
        }
        for (field, k) in [
            ("trunk_kernel", self.trunk_kernel),
            ("head_kernel_multi", self.head_kernel_multi),
        ] {
            if k % 2 == 0 {
                return Err(Error::config(format!("{field} must be odd, got {k}")));
            }
        }
        if self.rgb_mean.iter().any(|m| !(0.0..=255.0).contains(m)) {
            return Err(Error::config(format!(
                "rgb_mean must lie in [0, 255], got {:?}",
                self.rgb_mean
            )));
        }
        Ok(())
    }
}

/// On-disk model config. `rgb_mean` may be left out and filled from the
/// dataset manifest at training time; `res_scale` defaults by width.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfigFile {
    pub schema_version: u32,
    pub kind: ModelKind,
    pub num_blocks: usize,
    pub num_feats: usize,
    #[serde(default)]
    pub scales: Option<Vec<u32>>,
    #[serde(default)]
    pub res_scale: Option<f32>,
    #[serde(default)]
    pub rgb_mean: Option<[f32; 3]>,
}

impl ModelConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ModelConfigFile =
            toml::from_str(text).map_err(|e| Error::config(format!("model config: {e}")))?;
        if file.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::config(format!(
                "model config: schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        Ok(file)
    }

    /// Resolves defaults, taking the mean colour from `dataset_mean` when
    /// the file does not pin one.
    pub fn resolve(&self, dataset_mean: Option<[f32; 3]>) -> Result<ModelConfig> {
        let mut cfg = match self.kind {
            ModelKind::Single => {
                let scales = self.scales.clone().unwrap_or_default();
                let [scale] = scales.as_slice() else {
                    return Err(Error::config(format!(
                        "model config: single-scale model needs exactly one scale, got {scales:?}"
                    )));
                };
                ModelConfig::single(self.num_blocks, self.num_feats, *scale)
            }
            ModelKind::Multi => {
                let mut cfg = ModelConfig::multi(self.num_blocks, self.num_feats);
                if let Some(s) = &self.scales {
                    cfg.scales = s.clone();
                }
                cfg
            }
        };
        if let Some(r) = self.res_scale {
            cfg.res_scale = r;
        }
        cfg.rgb_mean = match (self.rgb_mean, dataset_mean) {
            (Some(m), _) | (None, Some(m)) => m,
            (None, None) => {
                return Err(Error::config(
                    "model config: rgb_mean missing and no dataset mean available",
                ))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
