//! EDSR and MDSR networks.

mod checkpoint;
mod config;
pub mod layers;
mod params;
mod transfer;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Eager, Exec, Tensor};

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{
    default_res_scale, ModelConfig, ModelConfigFile, ModelKind, CONFIG_SCHEMA_VERSION,
    SUPPORTED_SCALES,
};
pub use params::{Param, ParamStore};
pub use transfer::TransferReport;

/// A built network: its architecture descriptor and parameters.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
}

impl Model {
    /// Builds either family from `cfg`, initialising weights from `seed`.
    pub fn build(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        match cfg.kind {
            ModelKind::Single => Self::build_edsr(cfg, seed),
            ModelKind::Multi => Self::build_mdsr(cfg, seed),
        }
    }

    /// head conv(3→F), B residual blocks, conv(F→F) with a global skip from
    /// the head output, upsampler, tail conv(F→3).
    pub fn build_edsr(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        if cfg.kind != ModelKind::Single {
            return Err(Error::config("build_edsr needs a single-scale config"));
        }
        cfg.validate()?;
        let scale = cfg.scales[0];
        let (f, k) = (cfg.num_feats, cfg.trunk_kernel);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        p.add_conv(&mut rng, "head", 3, f, k)?;
        for i in 0..cfg.num_blocks {
            layers::add_res_block(&mut p, &mut rng, &format!("body.{i}"), f, k)?;
        }
        p.add_conv(&mut rng, "body_end", f, f, k)?;
        layers::add_upsampler(&mut p, &mut rng, "upsample", f, scale, k)?;
        p.add_conv(&mut rng, "tail", f, 3, k)?;
        Ok(Model {
            config: cfg.clone(),
            params: p,
        })
    }

    /// Shared head, two 5×5 residual blocks per scale, shared trunk with
    /// global skip, per-scale upsamplers and one shared tail conv.
    pub fn build_mdsr(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        if cfg.kind != ModelKind::Multi {
            return Err(Error::config("build_mdsr needs a multi-scale config"));
        }
        cfg.validate()?;
        let (f, k, k5) = (cfg.num_feats, cfg.trunk_kernel, cfg.head_kernel_multi);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        p.add_conv(&mut rng, "head", 3, f, k)?;
        for s in SUPPORTED_SCALES {
            for j in 0..2 {
                layers::add_res_block(&mut p, &mut rng, &format!("pre.x{s}.{j}"), f, k5)?;
            }
        }
        for i in 0..cfg.num_blocks {
            layers::add_res_block(&mut p, &mut rng, &format!("body.{i}"), f, k)?;
        }
        p.add_conv(&mut rng, "body_end", f, f, k)?;
        for s in SUPPORTED_SCALES {
            layers::add_upsampler(&mut p, &mut rng, &format!("upsample.x{s}"), f, s, k)?;
        }
        p.add_conv(&mut rng, "tail", f, 3, k)?;
        Ok(Model {
            config: cfg.clone(),
            params: p,
        })
    }

    /// Reassembles a model from a config and a matching parameter map.
    pub fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Self> {
        let reference = Model::build(&config, 0)?;
        for (name, p) in reference.params.iter() {
            match params.get(name) {
                Some(q) if q.dims() == p.dims() => {}
                Some(q) => {
                    return Err(Error::config(format!(
                        "parameter {name} has extent {:?}, architecture needs {:?}",
                        q.dims(),
                        p.dims()
                    )))
                }
                None => return Err(Error::config(format!("missing parameter {name}"))),
            }
        }
        if params.len() != reference.params.len() {
            let extra = params
                .names()
                .find(|n| !reference.params.contains(n))
                .unwrap_or_default();
            return Err(Error::config(format!("unexpected parameter {extra}")));
        }
        Ok(Model { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore {
        self.params
    }

    /// Exact number of scalar parameters, biases included.
    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// The scale a parameter is specific to, or `None` for shared ones.
    pub fn branch_scale(name: &str) -> Option<u32> {
        let rest = name
            .strip_prefix("pre.x")
            .or_else(|| name.strip_prefix("upsample.x"))?;
        rest.split('.').next()?.parse().ok()
    }

    /// Runs the network on an LR batch in the 0–255 domain.
    pub fn forward<E: Exec>(&self, ex: &mut E, x: &E::Value, scale: u32) -> Result<E::Value> {
        let cfg = &self.config;
        if !cfg.supports(scale) {
            return Err(Error::config(format!(
                "model does not support scale {scale} (has {:?})",
                cfg.scales
            )));
        }
        let p = &self.params;
        let h = layers::mean_shift(ex, x, cfg.rgb_mean, -1.0)?;
        let mut h = layers::conv(ex, p, "head", &h)?;
        if cfg.kind == ModelKind::Multi {
            for j in 0..2 {
                h = layers::res_block(ex, p, &format!("pre.x{scale}.{j}"), &h, cfg.res_scale)?;
            }
        }
        let mut res = h.clone();
        for i in 0..cfg.num_blocks {
            res = layers::res_block(ex, p, &format!("body.{i}"), &res, cfg.res_scale)?;
        }
        let res = layers::conv(ex, p, "body_end", &res)?;
        let res = ex.add(&res, &h)?;
        let up_prefix = match cfg.kind {
            ModelKind::Single => "upsample".to_owned(),
            ModelKind::Multi => format!("upsample.x{scale}"),
        };
        let up = layers::upsampler(ex, p, &up_prefix, &res, scale)?;
        let out = layers::conv(ex, p, "tail", &up)?;
        layers::mean_shift(ex, &out, cfg.rgb_mean, 1.0)
    }

    /// Inference without recording a tape.
    pub fn infer(&self, x: &Tensor, scale: u32) -> Result<Tensor> {
        self.forward(&mut Eager::new(), x, scale)
    }
}
