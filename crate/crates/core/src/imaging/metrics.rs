//! PSNR and SSIM on `f64` planes.

use super::image::Plane;
use crate::error::{Error, Result};

pub const PEAK: f64 = 255.0;
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Removes `pixels` from every side.
pub fn crop_border(plane: &Plane, pixels: usize) -> Result<Plane> {
    if 2 * pixels >= plane.width.min(plane.height) {
        return Err(Error::usage(format!(
            "cannot crop {pixels} px from each side of {}x{}",
            plane.width, plane.height
        )));
    }
    if pixels == 0 {
        return Ok(plane.clone());
    }
    let (w, h) = (plane.width - 2 * pixels, plane.height - 2 * pixels);
    let mut data = Vec::with_capacity(w * h);
    for y in pixels..pixels + h {
        let start = y * plane.width + pixels;
        data.extend_from_slice(&plane.data[start..start + w]);
    }
    Plane::new(w, h, data)
}

fn same_extent(planes: &[(&Plane, &Plane)]) -> Result<()> {
    for (a, b) in planes {
        if (a.width, a.height) != (b.width, b.height) {
            return Err(Error::shape(format!(
                "{}x{} vs {}x{}",
                a.width, a.height, b.width, b.height
            )));
        }
    }
    Ok(())
}

/// Peak signal-to-noise ratio over one or more channel pairs, pooling the
/// squared error. Identical inputs give `f64::INFINITY`.
pub fn psnr_channels(a: &[Plane], b: &[Plane]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::shape("psnr needs matching non-empty channel lists"));
    }
    let pairs: Vec<_> = a.iter().zip(b).collect();
    same_extent(&pairs)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (x, y) in pairs {
        sum += x
            .data
            .iter()
            .zip(&y.data)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>();
        count += x.data.len();
    }
    let mse = sum / count as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (PEAK * PEAK / mse).log10())
}

pub fn psnr(a: &Plane, b: &Plane) -> Result<f64> {
    psnr_channels(std::slice::from_ref(a), std::slice::from_ref(b))
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Separable "valid" Gaussian filtering.
fn filter_valid(src: &[f64], width: usize, height: usize, win: &[f64]) -> Vec<f64> {
    let k = win.len();
    let ow = width - k + 1;
    let oh = height - k + 1;
    let mut horiz = vec![0.0; ow * height];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for x in 0..ow {
            horiz[y * ow + x] = win.iter().zip(&row[x..x + k]).map(|(w, v)| w * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = win
                .iter()
                .enumerate()
                .map(|(j, w)| w * horiz[(y + j) * ow + x])
                .sum();
        }
    }
    out
}

/// Mean structural similarity with an 11×11 Gaussian window (σ = 1.5),
/// K1 = 0.01, K2 = 0.03 and dynamic range 255, averaged over the positions
/// where the window fits entirely.
pub fn ssim(a: &Plane, b: &Plane) -> Result<f64> {
    same_extent(&[(a, b)])?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::usage(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
            a.width, a.height
        )));
    }
    let win = gaussian_window();
    let (w, h) = (a.width, a.height);
    let c1 = (SSIM_K1 * PEAK).powi(2);
    let c2 = (SSIM_K2 * PEAK).powi(2);
    let aa: Vec<f64> = a.data.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.data.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(&a.data, w, h, &win);
    let mu_b = filter_valid(&b.data, w, h, &win);
    let e_aa = filter_valid(&aa, w, h, &win);
    let e_bb = filter_valid(&bb, w, h, &win);
    let e_ab = filter_valid(&ab, w, h, &win);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    Ok(total / n as f64)
}

/// Mean of per-channel SSIM.
pub fn ssim_channels(a: &[Plane], b: &[Plane]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::shape("ssim needs matching non-empty channel lists"));
    }
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b) {
        total += ssim(x, y)?;
    }
    Ok(total / a.len() as f64)
}
