//! Building blocks shared by both network families, written against
//! [`Exec`] so the same code drives training and inference.

use rand::Rng;

use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::Exec;

/// Convolution reading `{prefix}.weight` and `{prefix}.bias`.
pub fn conv<E: Exec>(
    ex: &mut E,
    params: &ParamStore,
    prefix: &str,
    x: &E::Value,
) -> Result<E::Value> {
    let wname = format!("{prefix}.weight");
    let bname = format!("{prefix}.bias");
    let w = ex.param(&wname, params.tensor(&wname)?);
    let b = ex.param(&bname, params.tensor(&bname)?);
    ex.conv2d(x, &w, &b)
}

/// `x + res_scale · conv2(relu(conv1(x)))`: no normalisation and no
/// activation after the skip addition.
pub fn res_block<E: Exec>(
    ex: &mut E,
    params: &ParamStore,
    prefix: &str,
    x: &E::Value,
    res_scale: f32,
) -> Result<E::Value> {
    let h = conv(ex, params, &format!("{prefix}.conv1"), x)?;
    let h = ex.relu(&h);
    let h = conv(ex, params, &format!("{prefix}.conv2"), &h)?;
    let h = if res_scale == 1.0 {
        h
    } else {
        ex.scale(&h, res_scale)
    };
    ex.add(x, &h)
}

pub(crate) fn add_res_block(
    store: &mut ParamStore,
    rng: &mut impl Rng,
    prefix: &str,
    feats: usize,
    kernel: usize,
) -> Result<()> {
    store.add_conv(rng, &format!("{prefix}.conv1"), feats, feats, kernel)?;
    store.add_conv(rng, &format!("{prefix}.conv2"), feats, feats, kernel)
}

/// Pixel-shuffle factor of each stage of an upsampler: ×4 is two ×2 stages.
pub fn upsampler_stages(scale: u32) -> Result<&'static [usize]> {
    match scale {
        2 => Ok(&[2]),
        3 => Ok(&[3]),
        4 => Ok(&[2, 2]),
        s => Err(Error::config(format!("unsupported upscaling factor {s}"))),
    }
}

/// Sub-pixel upsampler: per stage, conv(F → r²F) then pixel shuffle by r.
pub fn upsampler<E: Exec>(
    ex: &mut E,
    params: &ParamStore,
    prefix: &str,
    x: &E::Value,
    scale: u32,
) -> Result<E::Value> {
    let mut h = x.clone();
    for (i, &r) in upsampler_stages(scale)?.iter().enumerate() {
        h = conv(ex, params, &format!("{prefix}.{i}"), &h)?;
        h = ex.pixel_shuffle(&h, r)?;
    }
    Ok(h)
}

pub(crate) fn add_upsampler(
    store: &mut ParamStore,
    rng: &mut impl Rng,
    prefix: &str,
    feats: usize,
    scale: u32,
    kernel: usize,
) -> Result<()> {
    for (i, &r) in upsampler_stages(scale)?.iter().enumerate() {
        store.add_conv(rng, &format!("{prefix}.{i}"), feats, r * r * feats, kernel)?;
    }
    Ok(())
}

/// Adds `sign · rgb_mean` per colour channel.
pub fn mean_shift<E: Exec>(
    ex: &mut E,
    x: &E::Value,
    rgb_mean: [f32; 3],
    sign: f32,
) -> Result<E::Value> {
    if ex.shape(x).c != 3 {
        return Err(Error::shape(format!(
            "mean shift needs 3 channels, got {}",
            ex.shape(x).c
        )));
    }
    let offsets = rgb_mean.map(|m| sign * m);
    ex.shift_channels(x, &offsets)
}
