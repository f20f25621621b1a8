//! Enhanced deep residual super-resolution.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`] holds dense NCHW tensors, the operator kernels and a tape
//!   based reverse-mode differentiator.
//! * [`model`] builds the single-scale (EDSR) and multi-scale (MDSR)
//!   networks, counts their parameters and persists checkpoints.
//! * [`train`] implements the losses, Adam, the step schedule, patch
//!   sampling and the training loops.
//! * [`imaging`] covers PNG I/O, MATLAB-style bicubic resampling, luma
//!   conversion, PSNR/SSIM and geometric self-ensemble.
//! * [`data`] prepares a dataset directory and its manifest.

pub mod data;
pub mod error;
pub mod imaging;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use imaging::{FloatImage, GeomTransform, Image, Plane};
pub use model::{Checkpoint, Model, ModelConfig, ModelKind};
pub use tensor::{Tape, Tensor, Var};
pub use train::{LossKind, TrainConfig};
