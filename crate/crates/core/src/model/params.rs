use indexmap::IndexMap;
use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// A named trainable array. `dims` is the logical extent as stored in
/// checkpoints (`[out, in, k, k]` for weights, `[out]` for biases).
#[derive(Clone, Debug)]
pub struct Param {
    dims: Vec<usize>,
    pub value: Tensor,
}

impl Param {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let shape = Shape::from_dims(&dims)?;
        Ok(Param {
            value: Tensor::new(shape, data)?,
            dims,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Ordered map of parameter name to array, in construction order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: IndexMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, param: Param) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::config(format!("duplicate parameter {name}")));
        }
        self.entries.insert(name, param);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.entries.get_mut(name)
    }

    /// Value of a parameter that the architecture guarantees to exist.
    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::config(format!("missing parameter {name}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.values().map(Param::len).sum()
    }

    pub fn clear_grads(&mut self) {
        self.entries.values_mut().for_each(|p| p.value.clear_grad());
    }

    /// True when both stores hold the same names, extents and bit patterns.
    pub fn bit_eq(&self, other: &ParamStore) -> bool {
        self.len() == other.len()
            && self.iter().all(|(name, p)| {
                other
                    .get(name)
                    .is_some_and(|q| p.dims == q.dims && p.value.bit_eq(&q.value))
            })
    }

    /// Appends a conv layer with fan-in scaled uniform weights and zero bias.
    pub(crate) fn add_conv(
        &mut self,
        rng: &mut impl Rng,
        prefix: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
    ) -> Result<()> {
        let bound = (1.0 / (in_ch * kernel * kernel) as f64).sqrt() as f32;
        let n = out_ch * in_ch * kernel * kernel;
        let weight = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        self.insert(
            format!("{prefix}.weight"),
            Param::new(vec![out_ch, in_ch, kernel, kernel], weight)?,
        )?;
        self.insert(
            format!("{prefix}.bias"),
            Param::new(vec![out_ch], vec![0.0; out_ch])?,
        )
    }
}
