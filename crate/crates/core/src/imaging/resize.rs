//! Bicubic resampling with MATLAB `imresize` semantics.
//!
//! Cubic convolution kernel with a = −0.5 and 4-tap support. When
//! shrinking with antialiasing the kernel is stretched by the inverse scale
//! (so a ×1/4 reduction reads 16 taps). Output sample `x` (1-based) maps to
//! source coordinate `x/scale + 0.5·(1 − 1/scale)`; taps that fall outside
//! the image are mirrored back in. Weights are normalised per output
//! sample. Rows are resized before columns unless the vertical scale is
//! larger, matching MATLAB's dimension order.

use super::image::{FloatImage, Image};
use crate::error::{Error, Result};

/// Cubic convolution kernel, a = −0.5.
pub fn cubic(x: f64) -> f64 {
    let ax = x.abs();
    let ax2 = ax * ax;
    let ax3 = ax2 * ax;
    if ax <= 1.0 {
        1.5 * ax3 - 2.5 * ax2 + 1.0
    } else if ax <= 2.0 {
        -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0
    } else {
        0.0
    }
}

/// Source taps of one output sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Contribution {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Per-output-sample taps for resizing one axis from `in_len` to `out_len`.
pub fn contributions(in_len: usize, out_len: usize, antialias: bool) -> Vec<Contribution> {
    let scale = out_len as f64 / in_len as f64;
    let (kernel_scale, kernel_width) = if scale < 1.0 && antialias {
        (scale, 4.0 / scale)
    } else {
        (1.0, 4.0)
    };
    let taps = kernel_width.ceil() as i64 + 2;
    let period = 2 * in_len as i64;

    (1..=out_len)
        .map(|x| {
            let u = x as f64 / scale + 0.5 * (1.0 - 1.0 / scale);
            let left = (u - kernel_width / 2.0).floor() as i64;
            let mut pairs: Vec<(i64, f64)> = (0..taps)
                .map(|j| {
                    let idx = left + j;
                    let w = kernel_scale * cubic(kernel_scale * (u - idx as f64));
                    (idx, w)
                })
                .collect();
            let total: f64 = pairs.iter().map(|p| p.1).sum();
            pairs.iter_mut().for_each(|p| p.1 /= total);

            let mut c = Contribution {
                indices: Vec::with_capacity(pairs.len()),
                weights: Vec::with_capacity(pairs.len()),
            };
            for (idx, w) in pairs {
                if w == 0.0 {
                    continue;
                }
                // 1-based index folded into [1, in_len] by mirroring
                let m = (idx - 1).rem_euclid(period);
                let src = if m < in_len as i64 { m } else { period - 1 - m };
                c.indices.push(src as usize);
                c.weights.push(w);
            }
            c
        })
        .collect()
}

fn resize_rows(src: &[f32], width: usize, height: usize, out_h: usize, antialias: bool) -> Vec<f32> {
    let taps = contributions(height, out_h, antialias);
    let mut out = vec![0.0f32; width * out_h];
    for (y, c) in taps.iter().enumerate() {
        let row = &mut out[y * width..(y + 1) * width];
        for (x, o) in row.iter_mut().enumerate() {
            let v: f64 = c
                .indices
                .iter()
                .zip(&c.weights)
                .map(|(&i, &w)| w * src[i * width + x] as f64)
                .sum();
            *o = v as f32;
        }
    }
    out
}

fn resize_cols(src: &[f32], width: usize, height: usize, out_w: usize, antialias: bool) -> Vec<f32> {
    let taps = contributions(width, out_w, antialias);
    let mut out = vec![0.0f32; out_w * height];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for (x, c) in taps.iter().enumerate() {
            let v: f64 = c
                .indices
                .iter()
                .zip(&c.weights)
                .map(|(&i, &w)| w * row[i] as f64)
                .sum();
            out[y * out_w + x] = v as f32;
        }
    }
    out
}

/// Resizes a float image; no quantisation between the two passes.
pub fn resize_float(
    img: &FloatImage,
    out_w: usize,
    out_h: usize,
    antialias: bool,
) -> Result<FloatImage> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::usage(format!(
            "target size {out_w}x{out_h} must be positive"
        )));
    }
    let (w, h) = (img.width(), img.height());
    let rows_first = (out_h as f64 / h as f64) <= (out_w as f64 / w as f64);
    let mut data = Vec::with_capacity(out_w * out_h * 3);
    for c in 0..3 {
        let plane = img.channel(c);
        let resized = if rows_first {
            let tmp = resize_rows(plane, w, h, out_h, antialias);
            resize_cols(&tmp, w, out_h, out_w, antialias)
        } else {
            let tmp = resize_cols(plane, w, h, out_w, antialias);
            resize_rows(&tmp, out_w, h, out_h, antialias)
        };
        data.extend_from_slice(&resized);
    }
    FloatImage::new(out_w, out_h, data)
}

/// Bicubic resize of an 8-bit image, quantising only the final result.
pub fn bicubic_resize(img: &Image, out_w: usize, out_h: usize, antialias: bool) -> Result<Image> {
    Ok(resize_float(&img.to_float(), out_w, out_h, antialias)?.quantize())
}

/// Shrinks by an integer factor with antialiasing (the LR degradation).
pub fn downscale(img: &Image, scale: u32) -> Result<Image> {
    let s = scale as usize;
    if s == 0 || !img.width().is_multiple_of(s) || !img.height().is_multiple_of(s) {
        return Err(Error::usage(format!(
            "{}x{} is not divisible by {scale}",
            img.width(),
            img.height()
        )));
    }
    bicubic_resize(img, img.width() / s, img.height() / s, true)
}

/// Enlarges by an integer factor.
pub fn upscale(img: &Image, scale: u32) -> Result<Image> {
    let s = scale as usize;
    bicubic_resize(img, img.width() * s, img.height() * s, true)
}
