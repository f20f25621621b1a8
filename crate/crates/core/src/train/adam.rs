use std::collections::BTreeMap;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::model::ParamStore;

/// Adam hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates of one parameter and the number of updates it has had.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub t: u64,
}

impl Moments {
    pub fn zeros(len: usize) -> Self {
        Moments {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// Per-parameter optimizer state, created on a parameter's first update.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    moments: BTreeMap<String, Moments>,
}

impl AdamState {
    pub fn len(&self) -> usize {
        self.moments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moments.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Moments> {
        self.moments.get(name)
    }

    pub fn insert(&mut self, name: String, moments: Moments) {
        self.moments.insert(name, moments);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Moments)> {
        self.moments.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// One bias-corrected Adam update of every parameter in `grads`.
/// Parameters without a gradient keep both their values and their moments.
///
/// A non-finite gradient aborts before anything is modified.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &IndexMap<String, Vec<f32>>,
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    for (name, g) in grads {
        let p = params
            .get(name)
            .ok_or_else(|| Error::config(format!("gradient for unknown parameter {name}")))?;
        if p.len() != g.len() {
            return Err(Error::shape(format!(
                "gradient of {name} has {} values, parameter {}",
                g.len(),
                p.len()
            )));
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step: state.get(name).map_or(0, |m| m.t),
                detail: format!("gradient of {name}[{i}] is {}", g[i]),
            });
        }
    }

    for (name, g) in grads {
        let param = params.get_mut(name).expect("checked above");
        let mom = state
            .moments
            .entry(name.clone())
            .or_insert_with(|| Moments::zeros(g.len()));
        mom.t += 1;
        let t = mom.t.min(i32::MAX as u64) as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let data = param.value.data_mut();
        for (((p, &g), m), v) in data.iter_mut().zip(g).zip(&mut mom.m).zip(&mut mom.v) {
            let g = g as f64;
            let m_new = cfg.beta1 * *m as f64 + (1.0 - cfg.beta1) * g;
            let v_new = cfg.beta2 * *v as f64 + (1.0 - cfg.beta2) * g * g;
            *m = m_new as f32;
            *v = v_new as f32;
            let update = lr * (m_new / c1) / ((v_new / c2).sqrt() + cfg.eps);
            *p = (*p as f64 - update) as f32;
        }
    }
    Ok(())
}
