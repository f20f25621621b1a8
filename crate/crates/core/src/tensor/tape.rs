use std::sync::Arc;

use indexmap::IndexMap;

use super::kernels;
use super::{Shape, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d { x: Var, weight: Var, bias: Var },
    Relu(Var),
    Add(Var, Var),
    Scale(Var, f32),
    PixelShuffle(Var, usize),
    Shift(Var),
    L1 { pred: Var, target: Var },
    L2 { pred: Var, target: Var },
    Sum(Var),
    Dot(Var, Arc<Vec<f32>>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records one forward pass for reverse-mode differentiation.
///
/// Nodes are appended in execution order, which is a topological order of
/// the graph, so the backward sweep is a single reverse walk. A tape is
/// built per step and consumed by [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: IndexMap<String, Var>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a constant or differentiable input.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Records a named trainable parameter. Registering the same name twice
    /// returns the original handle, so shared weights accumulate gradient.
    pub fn param(&mut self, name: &str, value: &Tensor) -> Var {
        if let Some(&v) = self.params.get(name) {
            return v;
        }
        let v = self.push(value.clone(), Op::Leaf, true);
        self.params.insert(name.to_owned(), v);
        v
    }

    /// Names of every parameter read during the forward pass, in first-use
    /// order.
    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn conv2d(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let out = kernels::conv2d(self.value(x), self.value(weight), self.value(bias))?;
        let rg = self.needs(x) || self.needs(weight) || self.needs(bias);
        Ok(self.push(out, Op::Conv2d { x, weight, bias }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = kernels::relu(self.value(x));
        let rg = self.needs(x);
        self.push(out, Op::Relu(x), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::add(self.value(a), self.value(b))?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, s: f32) -> Var {
        let out = kernels::scale(self.value(x), s);
        let rg = self.needs(x);
        self.push(out, Op::Scale(x, s), rg)
    }

    pub fn pixel_shuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let out = kernels::pixel_shuffle(self.value(x), r)?;
        let rg = self.needs(x);
        Ok(self.push(out, Op::PixelShuffle(x, r), rg))
    }

    pub fn shift_channels(&mut self, x: Var, offsets: &[f32]) -> Result<Var> {
        let out = kernels::shift_channels(self.value(x), offsets)?;
        let rg = self.needs(x);
        Ok(self.push(out, Op::Shift(x), rg))
    }

    fn paired(&self, pred: Var, target: Var) -> Result<()> {
        if self.shape(pred) != self.shape(target) {
            return Err(Error::shape(format!(
                "loss between {} and {}",
                self.shape(pred),
                self.shape(target)
            )));
        }
        Ok(())
    }

    /// Mean absolute error.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.paired(pred, target)?;
        let p = self.value(pred).data();
        let t = self.value(target).data();
        let sum: f64 = p.iter().zip(t).map(|(a, b)| (a - b).abs() as f64).sum();
        let loss = (sum / p.len() as f64) as f32;
        let rg = self.needs(pred) || self.needs(target);
        Ok(self.push(Tensor::scalar(loss), Op::L1 { pred, target }, rg))
    }

    /// Mean squared error.
    pub fn l2_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.paired(pred, target)?;
        let p = self.value(pred).data();
        let t = self.value(target).data();
        let sum: f64 = p
            .iter()
            .zip(t)
            .map(|(a, b)| {
                let d = (a - b) as f64;
                d * d
            })
            .sum();
        let loss = (sum / p.len() as f64) as f32;
        let rg = self.needs(pred) || self.needs(target);
        Ok(self.push(Tensor::scalar(loss), Op::L2 { pred, target }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().map(|&v| v as f64).sum();
        let rg = self.needs(x);
        self.push(Tensor::scalar(s as f32), Op::Sum(x), rg)
    }

    /// Inner product with a fixed weight vector; a smooth scalar probe used
    /// by gradient checks.
    pub fn dot(&mut self, x: Var, weights: Vec<f32>) -> Result<Var> {
        if weights.len() != self.value(x).len() {
            return Err(Error::shape("dot weights do not match tensor"));
        }
        let s: f64 = self
            .value(x)
            .data()
            .iter()
            .zip(&weights)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum();
        let rg = self.needs(x);
        Ok(self.push(Tensor::scalar(s as f32), Op::Dot(x, Arc::new(weights)), rg))
    }

    /// Propagates d(loss)/d(·) to every leaf that requires gradient.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let loss_shape = self.shape(loss);
        if loss_shape.numel() != 1 {
            return Err(Error::usage(format!(
                "backward needs a scalar loss, got {loss_shape}"
            )));
        }
        let Tape { nodes, params } = self;
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let needs = |v: &Var| nodes[v.0].requires_grad;
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Conv2d { x, weight, bias } => {
                    let cg = kernels::conv2d_backward(
                        &nodes[x.0].value,
                        &nodes[weight.0].value,
                        &g,
                        needs(x),
                    )?;
                    if let Some(dx) = cg.input {
                        accumulate(&mut grads, *x, dx);
                    }
                    if needs(weight) {
                        accumulate(&mut grads, *weight, cg.weight);
                    }
                    if needs(bias) {
                        accumulate(&mut grads, *bias, cg.bias);
                    }
                }
                Op::Relu(x) => {
                    accumulate(&mut grads, *x, kernels::relu_backward(node.value.data(), &g));
                }
                Op::Add(a, b) => {
                    if needs(b) {
                        accumulate(&mut grads, *b, g.clone());
                    }
                    if needs(a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Scale(x, s) => {
                    accumulate(&mut grads, *x, g.iter().map(|v| v * s).collect());
                }
                Op::PixelShuffle(x, r) => {
                    let upstream = Tensor::new(node.value.shape(), g)?;
                    let dx = kernels::pixel_unshuffle(&upstream, *r)?;
                    accumulate(&mut grads, *x, dx.into_vec());
                }
                Op::Shift(x) => accumulate(&mut grads, *x, g),
                Op::L1 { pred, target } => {
                    let p = nodes[pred.0].value.data();
                    let t = nodes[target.0].value.data();
                    let k = g[0] / p.len() as f32;
                    let d: Vec<f32> = p
                        .iter()
                        .zip(t)
                        .map(|(a, b)| {
                            // subgradient 0 at the kink
                            let diff = a - b;
                            if diff > 0.0 {
                                k
                            } else if diff < 0.0 {
                                -k
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    if needs(target) {
                        accumulate(&mut grads, *target, d.iter().map(|v| -v).collect());
                    }
                    if needs(pred) {
                        accumulate(&mut grads, *pred, d);
                    }
                }
                Op::L2 { pred, target } => {
                    let p = nodes[pred.0].value.data();
                    let t = nodes[target.0].value.data();
                    let k = 2.0 * g[0] / p.len() as f32;
                    let d: Vec<f32> = p.iter().zip(t).map(|(a, b)| k * (a - b)).collect();
                    if needs(target) {
                        accumulate(&mut grads, *target, d.iter().map(|v| -v).collect());
                    }
                    if needs(pred) {
                        accumulate(&mut grads, *pred, d);
                    }
                }
                Op::Sum(x) => {
                    let n = nodes[x.0].value.len();
                    accumulate(&mut grads, *x, vec![g[0]; n]);
                }
                Op::Dot(x, w) => {
                    accumulate(&mut grads, *x, w.iter().map(|v| v * g[0]).collect());
                }
            }
        }

        let shapes = nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients {
            grads,
            shapes,
            params,
        })
    }
}

fn accumulate(grads: &mut [Option<Vec<f32>>], v: Var, g: Vec<f32>) {
    match &mut grads[v.0] {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g),
    }
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f32>>>,
    shapes: Vec<Shape>,
    params: IndexMap<String, Var>,
}

impl Gradients {
    /// Gradient of a leaf recorded with `requires_grad`. Leaves the loss
    /// does not depend on report all zeros.
    pub fn wrt(&self, v: Var) -> Option<Vec<f32>> {
        let shape = *self.shapes.get(v.0)?;
        match &self.grads[v.0] {
            Some(g) => Some(g.clone()),
            None => Some(vec![0.0; shape.numel()]),
        }
    }

    pub fn param(&self, name: &str) -> Option<Vec<f32>> {
        self.params.get(name).and_then(|&v| self.wrt(v))
    }

    /// Moves out the gradient of every recorded parameter, keyed by name.
    pub fn into_params(mut self) -> IndexMap<String, Vec<f32>> {
        let params = std::mem::take(&mut self.params);
        params
            .into_iter()
            .map(|(name, v)| {
                let g = self.grads[v.0]
                    .take()
                    .unwrap_or_else(|| vec![0.0; self.shapes[v.0].numel()]);
                (name, g)
            })
            .collect()
    }
}
