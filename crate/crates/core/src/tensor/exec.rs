use super::kernels;
use super::{Shape, Tape, Tensor, Var};
use crate::error::Result;

/// The operator set a network forward pass is written against.
///
/// [`Tape`] records for differentiation; [`Eager`] evaluates directly and
/// lets intermediates drop as soon as they go out of scope, which keeps
/// inference memory at a few activations.
pub trait Exec {
    type Value: Clone;

    fn param(&mut self, name: &str, value: &Tensor) -> Self::Value;
    fn shape(&self, x: &Self::Value) -> Shape;
    fn conv2d(
        &mut self,
        x: &Self::Value,
        weight: &Self::Value,
        bias: &Self::Value,
    ) -> Result<Self::Value>;
    fn relu(&mut self, x: &Self::Value) -> Self::Value;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn scale(&mut self, x: &Self::Value, s: f32) -> Self::Value;
    fn pixel_shuffle(&mut self, x: &Self::Value, r: usize) -> Result<Self::Value>;
    fn shift_channels(&mut self, x: &Self::Value, offsets: &[f32]) -> Result<Self::Value>;
}

impl Exec for Tape {
    type Value = Var;

    fn param(&mut self, name: &str, value: &Tensor) -> Var {
        Tape::param(self, name, value)
    }

    fn shape(&self, x: &Var) -> Shape {
        Tape::shape(self, *x)
    }

    fn conv2d(&mut self, x: &Var, weight: &Var, bias: &Var) -> Result<Var> {
        Tape::conv2d(self, *x, *weight, *bias)
    }

    fn relu(&mut self, x: &Var) -> Var {
        Tape::relu(self, *x)
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        Tape::add(self, *a, *b)
    }

    fn scale(&mut self, x: &Var, s: f32) -> Var {
        Tape::scale(self, *x, s)
    }

    fn pixel_shuffle(&mut self, x: &Var, r: usize) -> Result<Var> {
        Tape::pixel_shuffle(self, *x, r)
    }

    fn shift_channels(&mut self, x: &Var, offsets: &[f32]) -> Result<Var> {
        Tape::shift_channels(self, *x, offsets)
    }
}

/// Direct evaluation without recording. Parameter reads are still logged.
#[derive(Debug, Default)]
pub struct Eager {
    params_read: Vec<String>,
}

impl Eager {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn params_read(&self) -> &[String] {
        &self.params_read
    }
}

impl Exec for Eager {
    type Value = Tensor;

    fn param(&mut self, name: &str, value: &Tensor) -> Tensor {
        if !self.params_read.iter().any(|n| n == name) {
            self.params_read.push(name.to_owned());
        }
        value.clone()
    }

    fn shape(&self, x: &Tensor) -> Shape {
        x.shape()
    }

    fn conv2d(&mut self, x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
        kernels::conv2d(x, weight, bias)
    }

    fn relu(&mut self, x: &Tensor) -> Tensor {
        kernels::relu(x)
    }

    fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        kernels::add(a, b)
    }

    fn scale(&mut self, x: &Tensor, s: f32) -> Tensor {
        kernels::scale(x, s)
    }

    fn pixel_shuffle(&mut self, x: &Tensor, r: usize) -> Result<Tensor> {
        kernels::pixel_shuffle(x, r)
    }

    fn shift_channels(&mut self, x: &Tensor, offsets: &[f32]) -> Result<Tensor> {
        kernels::shift_channels(x, offsets)
    }
}
