use rand::Rng;

use crate::data::TrainingSet;
use crate::error::{Error, Result};
use crate::imaging::{GeomTransform, Image};
use crate::tensor::{Shape, Tensor};

/// Where one batch item was cut from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchOrigin {
    pub image: usize,
    /// Top-left corner in LR pixels.
    pub x: usize,
    pub y: usize,
    pub transform: GeomTransform,
}

/// Paired LR/HR patches in the 0–255 domain.
#[derive(Clone, Debug)]
pub struct Batch {
    pub scale: u32,
    pub lr: Tensor,
    pub hr: Tensor,
    pub origins: Vec<PatchOrigin>,
}

impl Batch {
    /// Min, max and mean of both tensors, for diagnostics.
    pub fn stats(&self) -> String {
        fn summary(t: &Tensor) -> String {
            let d = t.data();
            let (lo, hi) = d
                .iter()
                .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            let mean = d.iter().map(|&v| v as f64).sum::<f64>() / d.len().max(1) as f64;
            format!("min={lo} max={hi} mean={mean:.3}")
        }
        format!(
            "x{} lr[{}] hr[{}] origins={:?}",
            self.scale,
            summary(&self.lr),
            summary(&self.hr),
            self.origins
        )
    }
}

/// Indices of the images large enough for `patch_lr` at `scale`.
pub fn eligible_images(set: &TrainingSet, scale: u32, patch_lr: usize) -> Vec<usize> {
    set.pairs
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            p.lr
                .get(&scale)
                .is_some_and(|lr| lr.width() >= patch_lr && lr.height() >= patch_lr)
        })
        .map(|(i, _)| i)
        .collect()
}

/// Draws `batch` aligned patch pairs: an image, an LR offset and one of the
/// eight dihedral transforms per item, all from `rng`. The HR patch starts
/// at `scale` times the LR offset.
pub fn sample_batch(
    set: &TrainingSet,
    scale: u32,
    batch: usize,
    patch_lr: usize,
    rng: &mut impl Rng,
) -> Result<Batch> {
    if set.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    let eligible = eligible_images(set, scale, patch_lr);
    if eligible.is_empty() {
        return Err(Error::config(format!(
            "no training image has a x{scale} LR version of at least {patch_lr}x{patch_lr}"
        )));
    }
    let s = scale as usize;
    let patch_hr = patch_lr * s;
    let mut lr_data = Vec::with_capacity(batch * 3 * patch_lr * patch_lr);
    let mut hr_data = Vec::with_capacity(batch * 3 * patch_hr * patch_hr);
    let mut origins = Vec::with_capacity(batch);
    for _ in 0..batch {
        let image = eligible[rng.random_range(0..eligible.len())];
        let pair = &set.pairs[image];
        let lr = &pair.lr[&scale];
        let x = rng.random_range(0..=lr.width() - patch_lr);
        let y = rng.random_range(0..=lr.height() - patch_lr);
        let transform = GeomTransform::ALL[rng.random_range(0..8)];
        lr_data.extend(cut(lr, x, y, patch_lr, transform)?);
        hr_data.extend(cut(&pair.hr, x * s, y * s, patch_hr, transform)?);
        origins.push(PatchOrigin {
            image,
            x,
            y,
            transform,
        });
    }
    Ok(Batch {
        scale,
        lr: Tensor::new(Shape::new(batch, 3, patch_lr, patch_lr), lr_data)?,
        hr: Tensor::new(Shape::new(batch, 3, patch_hr, patch_hr), hr_data)?,
        origins,
    })
}

fn cut(img: &Image, x: usize, y: usize, side: usize, t: GeomTransform) -> Result<Vec<f32>> {
    let planar = img.crop(x, y, side, side)?.to_float();
    Ok(t.apply_planes(planar.data(), side, side).0)
}
