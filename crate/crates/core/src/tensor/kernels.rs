//! Forward and backward kernels for the operator set.
//!
//! Convolution runs as im2col followed by a single-precision GEMM per batch
//! item. Batch items are processed in parallel but every reduction across
//! items is summed in index order, so results do not depend on the number
//! of worker threads.

use rayon::prelude::*;

use super::{Shape, Tensor};
use crate::error::{Error, Result};

/// Geometry of a stride-1 "same" convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub height: usize,
    pub width: usize,
}

impl ConvGeometry {
    pub fn padding(&self) -> usize {
        (self.kernel - 1) / 2
    }

    fn patch_len(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }

    fn plane(&self) -> usize {
        self.height * self.width
    }
}

/// Validates input, weight and bias extents for [`conv2d`].
pub fn conv_geometry(x: Shape, weight: Shape, bias_len: usize) -> Result<ConvGeometry> {
    let (out_ch, in_ch, kh, kw) = (weight.n, weight.c, weight.h, weight.w);
    if kh != kw || kh % 2 == 0 {
        return Err(Error::shape(format!(
            "kernel must be square with odd size, got {kh}x{kw}"
        )));
    }
    if x.c != in_ch {
        return Err(Error::shape(format!(
            "conv expects {in_ch} input channels, got {}",
            x.c
        )));
    }
    if x.h == 0 || x.w == 0 {
        return Err(Error::shape(format!("empty spatial extent {x}")));
    }
    if bias_len != out_ch {
        return Err(Error::shape(format!(
            "bias has {bias_len} entries for {out_ch} output channels"
        )));
    }
    Ok(ConvGeometry {
        in_ch,
        out_ch,
        kernel: kh,
        height: x.h,
        width: x.w,
    })
}

fn im2col(src: &[f32], g: &ConvGeometry, cols: &mut [f32]) {
    let (h, w, k) = (g.height as isize, g.width as isize, g.kernel);
    let pad = g.padding() as isize;
    let plane = g.plane();
    for ci in 0..g.in_ch {
        let channel = &src[ci * plane..(ci + 1) * plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y + dy;
                    let out = &mut dst[(y * w) as usize..((y + 1) * w) as usize];
                    if sy < 0 || sy >= h {
                        out.fill(0.0);
                        continue;
                    }
                    let src_row = &channel[(sy * w) as usize..((sy + 1) * w) as usize];
                    for (x, o) in out.iter_mut().enumerate() {
                        let sx = x as isize + dx;
                        *o = if sx < 0 || sx >= w {
                            0.0
                        } else {
                            src_row[sx as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f32], g: &ConvGeometry, dst: &mut [f32]) {
    let (h, w, k) = (g.height as isize, g.width as isize, g.kernel);
    let pad = g.padding() as isize;
    let plane = g.plane();
    for ci in 0..g.in_ch {
        let channel = &mut dst[ci * plane..(ci + 1) * plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y + dy;
                    if sy < 0 || sy >= h {
                        continue;
                    }
                    let col_row = &src[(y * w) as usize..((y + 1) * w) as usize];
                    let dst_row = &mut channel[(sy * w) as usize..((sy + 1) * w) as usize];
                    for (x, v) in col_row.iter().enumerate() {
                        let sx = x as isize + dx;
                        if sx >= 0 && sx < w {
                            dst_row[sx as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// `c (m×n) = a (m×k) · b (k×n)` with explicit row and column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    a_strides: (isize, isize),
    b: &[f32],
    b_strides: (isize, isize),
    c: &mut [f32],
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: the strides address only elements inside `a` (m·k), `b` (k·n)
    // and `c` (m·n, row-major), which the callers size accordingly.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Stride-1 cross-correlation with zero "same" padding plus bias.
pub fn conv2d(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let g = conv_geometry(x.shape(), weight.shape(), bias.len())?;
    let xs = x.shape();
    let out_shape = Shape::new(xs.n, g.out_ch, g.height, g.width);
    let plane = g.plane();
    let patch = g.patch_len();
    let mut out = vec![0.0f32; out_shape.numel()];
    let w = weight.data();
    let b = bias.data();

    out.par_chunks_mut(g.out_ch * plane)
        .enumerate()
        .for_each(|(n, dst)| {
            let mut cols = vec![0.0f32; patch * plane];
            im2col(x.item_slice(n), &g, &mut cols);
            gemm(
                g.out_ch,
                patch,
                plane,
                w,
                (patch as isize, 1),
                &cols,
                (plane as isize, 1),
                dst,
            );
            for (o, chunk) in dst.chunks_mut(plane).enumerate() {
                let bo = b[o];
                chunk.iter_mut().for_each(|v| *v += bo);
            }
        });
    Tensor::new(out_shape, out)
}

/// Gradients of [`conv2d`] with respect to input, weight and bias.
pub struct ConvGrads {
    pub input: Option<Vec<f32>>,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

pub fn conv2d_backward(
    x: &Tensor,
    weight: &Tensor,
    grad_out: &[f32],
    need_input: bool,
) -> Result<ConvGrads> {
    let g = conv_geometry(x.shape(), weight.shape(), weight.shape().n)?;
    let xs = x.shape();
    let plane = g.plane();
    let patch = g.patch_len();
    let per_out = g.out_ch * plane;
    if grad_out.len() != xs.n * per_out {
        return Err(Error::shape("upstream gradient does not match conv output"));
    }
    let w = weight.data();

    let per_item: Vec<(Vec<f32>, Option<Vec<f32>>)> = (0..xs.n)
        .into_par_iter()
        .map(|n| {
            let dy = &grad_out[n * per_out..(n + 1) * per_out];
            let mut cols = vec![0.0f32; patch * plane];
            im2col(x.item_slice(n), &g, &mut cols);
            let mut dw = vec![0.0f32; g.out_ch * patch];
            // dW = dY · colsᵀ
            gemm(
                g.out_ch,
                plane,
                patch,
                dy,
                (plane as isize, 1),
                &cols,
                (1, plane as isize),
                &mut dw,
            );
            let dx = need_input.then(|| {
                // dcols = Wᵀ · dY, reusing the im2col buffer
                gemm(
                    patch,
                    g.out_ch,
                    plane,
                    w,
                    (1, patch as isize),
                    dy,
                    (plane as isize, 1),
                    &mut cols,
                );
                let mut dx = vec![0.0f32; g.in_ch * plane];
                col2im(&cols, &g, &mut dx);
                dx
            });
            (dw, dx)
        })
        .collect();

    let mut weight_grad = vec![0.0f32; g.out_ch * patch];
    let mut input_grad = need_input.then(|| Vec::with_capacity(xs.numel()));
    for (dw, dx) in per_item {
        weight_grad.iter_mut().zip(&dw).for_each(|(a, b)| *a += b);
        if let (Some(acc), Some(dx)) = (input_grad.as_mut(), dx) {
            acc.extend_from_slice(&dx);
        }
    }

    let mut bias_grad = vec![0.0f64; g.out_ch];
    for n in 0..xs.n {
        for (o, acc) in bias_grad.iter_mut().enumerate() {
            let start = n * per_out + o * plane;
            *acc += grad_out[start..start + plane]
                .iter()
                .map(|&v| v as f64)
                .sum::<f64>();
        }
    }

    Ok(ConvGrads {
        input: input_grad,
        weight: weight_grad,
        bias: bias_grad.into_iter().map(|v| v as f32).collect(),
    })
}

pub fn relu(x: &Tensor) -> Tensor {
    Tensor::new(x.shape(), x.data().iter().map(|&v| v.max(0.0)).collect())
        .expect("same shape")
}

/// Gradient of relu given its *output*; zero where the output is zero.
pub fn relu_backward(out: &[f32], grad_out: &[f32]) -> Vec<f32> {
    out.iter()
        .zip(grad_out)
        .map(|(&y, &g)| if y > 0.0 { g } else { 0.0 })
        .collect()
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "add of {} and {}",
            a.shape(),
            b.shape()
        )));
    }
    Tensor::new(
        a.shape(),
        a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect(),
    )
}

pub fn scale(x: &Tensor, s: f32) -> Tensor {
    if s == 1.0 {
        return x.clone();
    }
    Tensor::new(x.shape(), x.data().iter().map(|v| v * s).collect()).expect("same shape")
}

/// Adds `offsets[c]` to every element of channel `c`.
pub fn shift_channels(x: &Tensor, offsets: &[f32]) -> Result<Tensor> {
    let s = x.shape();
    if s.c != offsets.len() {
        return Err(Error::shape(format!(
            "channel shift with {} offsets on {} channels",
            offsets.len(),
            s.c
        )));
    }
    let plane = s.plane();
    let data = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, v)| v + offsets[(i / plane) % s.c])
        .collect();
    Tensor::new(s, data)
}

fn shuffle_shape(s: Shape, r: usize) -> Result<Shape> {
    if r == 0 || !s.c.is_multiple_of(r * r) {
        return Err(Error::shape(format!(
            "pixel shuffle by {r} needs channels divisible by {}, got {}",
            r * r,
            s.c
        )));
    }
    Ok(Shape::new(s.n, s.c / (r * r), s.h * r, s.w * r))
}

/// Sub-pixel rearrangement `(n, c·r², h, w) → (n, c, h·r, w·r)`.
///
/// `out[n][c][y][x] = in[n][c·r² + (y mod r)·r + (x mod r)][y div r][x div r]`.
pub fn pixel_shuffle(x: &Tensor, r: usize) -> Result<Tensor> {
    let s = x.shape();
    let o = shuffle_shape(s, r)?;
    if r == 1 {
        return Ok(x.clone());
    }
    let src = x.data();
    let mut out = vec![0.0f32; o.numel()];
    for n in 0..o.n {
        for c in 0..o.c {
            for y in 0..o.h {
                for xx in 0..o.w {
                    let ci = c * r * r + (y % r) * r + (xx % r);
                    let si = ((n * s.c + ci) * s.h + y / r) * s.w + xx / r;
                    out[((n * o.c + c) * o.h + y) * o.w + xx] = src[si];
                }
            }
        }
    }
    Tensor::new(o, out)
}

/// Inverse of [`pixel_shuffle`]; also its backward pass.
pub fn pixel_unshuffle(x: &Tensor, r: usize) -> Result<Tensor> {
    let s = x.shape();
    if r == 0 || !s.h.is_multiple_of(r) || !s.w.is_multiple_of(r) {
        return Err(Error::shape(format!(
            "pixel unshuffle by {r} of spatial extent {}x{}",
            s.h, s.w
        )));
    }
    if r == 1 {
        return Ok(x.clone());
    }
    let o = Shape::new(s.n, s.c * r * r, s.h / r, s.w / r);
    let src = x.data();
    let mut out = vec![0.0f32; o.numel()];
    for n in 0..s.n {
        for c in 0..s.c {
            for y in 0..s.h {
                for xx in 0..s.w {
                    let ci = c * r * r + (y % r) * r + (xx % r);
                    let di = ((n * o.c + ci) * o.h + y / r) * o.w + xx / r;
                    out[di] = src[((n * s.c + c) * s.h + y) * s.w + xx];
                }
            }
        }
    }
    Tensor::new(o, out)
}
