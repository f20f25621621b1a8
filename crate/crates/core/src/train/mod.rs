//! Losses, Adam, the learning-rate schedule, patch sampling and the
//! training loops.

mod adam;
mod config;
pub mod sampler;
mod schedule;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState, Moments};
pub use config::{LossKind, TrainConfig};
pub use sampler::{sample_batch, Batch, PatchOrigin};
pub use schedule::lr_at;
pub use trainer::{train_multi, train_single, StepRecord, TrainObserver, TrainOutcome, Trainer};
