//! Image I/O, resampling, colour conversion, quality metrics and
//! geometric self-ensemble.

mod color;
pub mod ensemble;
pub mod eval;
mod geometry;
mod image;
pub mod metrics;
pub mod resize;

pub use color::rgb_to_y;
pub use ensemble::{self_ensemble, self_ensemble_with};
pub use eval::{bicubic_baseline, score_pair, Convention, EvalReport, Score};
pub use geometry::GeomTransform;
pub use image::{quantize, FloatImage, Image, Plane};
pub use metrics::{crop_border, psnr, ssim};
pub use resize::{bicubic_resize, downscale, upscale};
