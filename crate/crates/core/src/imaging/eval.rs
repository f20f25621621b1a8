//! Evaluation conventions and reports.

use std::fmt::Write as _;

use super::color::rgb_to_y;
use super::image::{FloatImage, Image, Plane};
use super::metrics::{crop_border, psnr_channels, ssim_channels};
use super::resize::{downscale, upscale};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColorMode {
    /// BT.601 luma only.
    Y,
    /// All three colour channels.
    Rgb,
}

/// How an SR/ground-truth pair is compared.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Convention {
    pub color: ColorMode,
    /// Pixels dropped from every side before measuring.
    pub border: usize,
    pub scale: u32,
}

impl Convention {
    /// Public benchmarks (Set5, Set14, B100, Urban100): luma, crop `scale`.
    pub fn benchmark(scale: u32) -> Self {
        Convention {
            color: ColorMode::Y,
            border: scale as usize,
            scale,
        }
    }

    /// DIV2K validation: RGB, crop `6 + scale`.
    pub fn div2k(scale: u32) -> Self {
        Convention {
            color: ColorMode::Rgb,
            border: 6 + scale as usize,
            scale,
        }
    }

    pub fn tag(&self) -> String {
        let color = match self.color {
            ColorMode::Y => "y",
            ColorMode::Rgb => "rgb",
        };
        format!("color={color} border={} scale=x{}", self.border, self.scale)
    }

    fn planes(&self, img: &Image) -> Result<Vec<Plane>> {
        let f = img.to_float();
        let planes = match self.color {
            ColorMode::Y => vec![rgb_to_y(&f)],
            ColorMode::Rgb => f.channels().to_vec(),
        };
        planes.iter().map(|p| crop_border(p, self.border)).collect()
    }
}

/// PSNR (dB) and SSIM of one image pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Score {
    pub psnr: f64,
    pub ssim: f64,
}

pub fn score_pair(sr: &Image, gt: &Image, convention: &Convention) -> Result<Score> {
    if (sr.width(), sr.height()) != (gt.width(), gt.height()) {
        return Err(Error::shape(format!(
            "SR is {}x{}, ground truth {}x{}",
            sr.width(),
            sr.height(),
            gt.width(),
            gt.height()
        )));
    }
    let a = convention.planes(sr)?;
    let b = convention.planes(gt)?;
    Ok(Score {
        psnr: psnr_channels(&a, &b)?,
        ssim: ssim_channels(&a, &b)?,
    })
}

/// Crops an HR image so both sides are multiples of `scale` (top-left kept).
pub fn modcrop(img: &Image, scale: u32) -> Result<Image> {
    let s = scale as usize;
    img.crop(0, 0, img.width() - img.width() % s, img.height() - img.height() % s)
}

/// Bicubic baseline: shrink the HR image, enlarge it back and score the
/// result against the HR image under `convention`.
pub fn bicubic_baseline(hr: &Image, convention: &Convention) -> Result<Score> {
    let hr = modcrop(hr, convention.scale)?;
    let lr = downscale(&hr, convention.scale)?;
    let sr = upscale(&lr, convention.scale)?;
    score_pair(&sr, &hr, convention)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageRecord {
    pub name: String,
    pub score: Score,
}

/// Per-image scores under one convention plus their means.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub convention: Convention,
    pub images: Vec<ImageRecord>,
    /// Images that could not be scored, with the reason.
    pub failures: Vec<(String, String)>,
}

impl EvalReport {
    pub fn new(convention: Convention) -> Self {
        EvalReport {
            convention,
            images: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, score: Score) {
        self.images.push(ImageRecord {
            name: name.into(),
            score,
        });
    }

    pub fn sort(&mut self) {
        self.images.sort_by(|a, b| a.name.cmp(&b.name));
        self.failures.sort();
    }

    /// Records excluded from the PSNR mean because they matched exactly.
    pub fn infinite_psnr(&self) -> usize {
        self.images.iter().filter(|r| r.score.psnr.is_infinite()).count()
    }

    /// Mean PSNR over the finite entries.
    pub fn mean_psnr(&self) -> Option<f64> {
        mean(self.images.iter().map(|r| r.score.psnr).filter(|p| p.is_finite()))
    }

    pub fn mean_ssim(&self) -> Option<f64> {
        mean(self.images.iter().map(|r| r.score.ssim))
    }

    /// One tab-separated record per image, failures, then a summary line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.convention.tag());
        for r in &self.images {
            let _ = writeln!(
                out,
                "image\t{}\tpsnr={}\tssim={:.4}",
                r.name,
                fmt_db(r.score.psnr),
                r.score.ssim
            );
        }
        for (name, why) in &self.failures {
            let _ = writeln!(out, "error\t{name}\t{why}");
        }
        let psnr = self.mean_psnr().map_or("n/a".to_owned(), fmt_db);
        let ssim = self.mean_ssim().map_or("n/a".to_owned(), |s| format!("{s:.4}"));
        let _ = write!(
            out,
            "mean\t{}\tpsnr={psnr}\tssim={ssim}\timages={}",
            self.convention.tag(),
            self.images.len()
        );
        let inf = self.infinite_psnr();
        if inf > 0 {
            let _ = write!(out, "\texcluded_inf_psnr={inf}");
        }
        if !self.failures.is_empty() {
            let _ = write!(out, "\terrors={}", self.failures.len());
        }
        out.push('\n');
        out
    }
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_owned()
    } else {
        format!("{v:.4}")
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Scores a float SR output after quantising it, as a saved PNG would be.
pub fn score_float(sr: &FloatImage, gt: &Image, convention: &Convention) -> Result<Score> {
    score_pair(&sr.quantize(), gt, convention)
}
