use super::geometry::GeomTransform;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::Tensor;

/// Geometric self-ensemble: for each transform, feed the transformed input
/// to `f`, undo the transform on the output and average.
///
/// Per element the outputs are summed in sorted order, so the result does
/// not depend on the order the transforms are visited in. That makes the
/// ensemble exactly equivariant when `transforms` is the whole group.
pub fn self_ensemble_with(
    x: &Tensor,
    transforms: &[GeomTransform],
    mut f: impl FnMut(&Tensor) -> Result<Tensor>,
) -> Result<Tensor> {
    if transforms.is_empty() {
        return Err(Error::usage("self-ensemble needs at least one transform"));
    }
    let mut outputs = Vec::with_capacity(transforms.len());
    for &t in transforms {
        let y = f(&t.apply_tensor(x)?)?;
        outputs.push(t.inverse().apply_tensor(&y)?);
    }
    let shape = outputs[0].shape();
    if let Some(bad) = outputs.iter().find(|o| o.shape() != shape) {
        return Err(Error::shape(format!(
            "ensemble members disagree on shape: {shape} vs {}",
            bad.shape()
        )));
    }
    let count = outputs.len() as f64;
    let mut values = vec![0.0f32; outputs.len()];
    let data = (0..shape.numel())
        .map(|i| {
            for (v, o) in values.iter_mut().zip(&outputs) {
                *v = o.data()[i];
            }
            values.sort_unstable_by(f32::total_cmp);
            (values.iter().map(|&v| v as f64).sum::<f64>() / count) as f32
        })
        .collect();
    Tensor::new(shape, data)
}

/// Eight-transform self-ensemble of a network at `scale`.
pub fn self_ensemble(model: &Model, x: &Tensor, scale: u32) -> Result<Tensor> {
    self_ensemble_with(x, &GeomTransform::ALL, |t| model.infer(t, scale))
}
