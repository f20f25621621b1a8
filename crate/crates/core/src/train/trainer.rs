use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamState};
use super::config::{LossKind, TrainConfig};
use super::sampler::{eligible_images, sample_batch, Batch};
use crate::data::TrainingSet;
use crate::error::{Error, Result};
use crate::model::{Checkpoint, Model, ModelKind};
use crate::tensor::Tape;

/// One completed update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    /// Updates completed including this one.
    pub step: u64,
    pub scale: u32,
    pub lr: f64,
    pub loss: f64,
}

impl StepRecord {
    /// `step<TAB>scale<TAB>lr<TAB>loss`
    pub fn log_line(&self) -> String {
        format!("{}\t{}\t{:e}\t{}", self.step, self.scale, self.lr, self.loss)
    }
}

/// Hooks called by [`Trainer::run`].
pub trait TrainObserver {
    fn on_step(&mut self, _record: &StepRecord, _trainer: &Trainer) -> Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _checkpoint: &Checkpoint) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

/// Final state and per-step losses of a run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub records: Vec<StepRecord>,
}

/// Sample → forward → loss → backward → Adam, one update at a time.
///
/// Randomness for update `k` comes from a generator seeded with
/// `(seed, stream = k)`, so a resumed run replays the same batches as an
/// uninterrupted one.
#[derive(Clone, Debug)]
pub struct Trainer {
    model: Model,
    adam: AdamState,
    step: u64,
    cfg: TrainConfig,
    scales: Vec<u32>,
}

impl Trainer {
    pub fn new(model: Model, cfg: TrainConfig) -> Result<Self> {
        Self::with_state(model, AdamState::default(), 0, cfg)
    }

    pub fn resume(checkpoint: &Checkpoint, cfg: TrainConfig) -> Result<Self> {
        Self::with_state(checkpoint.model()?, checkpoint.adam.clone(), checkpoint.step, cfg)
    }

    fn with_state(model: Model, adam: AdamState, step: u64, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let scales = cfg.scales_for(model.config())?;
        Ok(Trainer {
            model,
            adam,
            step,
            cfg,
            scales,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(&self.model, &self.adam, self.step)
    }

    /// Warns about images too small for the patch size and fails if none is
    /// usable at some scale.
    pub fn check_data(&self, set: &TrainingSet) -> Result<()> {
        for &scale in &self.scales {
            let ok = eligible_images(set, scale, self.cfg.patch_lr);
            for (i, p) in set.pairs.iter().enumerate() {
                if !ok.contains(&i) {
                    warn!(
                        "{}: smaller than a {}px patch at x{scale}, skipped",
                        p.name,
                        self.cfg.patch_lr * scale as usize
                    );
                }
            }
            if ok.is_empty() {
                return Err(Error::config(format!(
                    "no training image fits a {}px HR patch at x{scale}",
                    self.cfg.patch_lr * scale as usize
                )));
            }
        }
        Ok(())
    }

    fn rng_for(&self, step: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(step);
        rng
    }

    /// The scale and batch update `self.step()` will use.
    pub fn next_batch(&self, set: &TrainingSet) -> Result<Batch> {
        let mut rng = self.rng_for(self.step);
        let scale = if self.scales.len() == 1 {
            self.scales[0]
        } else {
            self.scales[rng.random_range(0..self.scales.len())]
        };
        sample_batch(set, scale, self.cfg.batch, self.cfg.patch_lr, &mut rng)
    }

    /// Loss of the current model on `batch` without updating anything.
    pub fn loss_on(&self, batch: &Batch) -> Result<f64> {
        let mut tape = Tape::new();
        let loss = self.forward_loss(&mut tape, batch)?;
        Ok(tape.value(loss).item().expect("scalar loss") as f64)
    }

    fn forward_loss(&self, tape: &mut Tape, batch: &Batch) -> Result<crate::tensor::Var> {
        let x = tape.leaf(batch.lr.clone(), false);
        let pred = self.model.forward(tape, &x, batch.scale)?;
        let target = tape.leaf(batch.hr.clone(), false);
        match self.cfg.loss {
            LossKind::L1 => tape.l1_loss(pred, target),
            LossKind::L2 => tape.l2_loss(pred, target),
        }
    }

    /// Runs one update. Only parameters on the path of the drawn scale get
    /// a gradient, so only they and their moments change.
    pub fn train_step(&mut self, set: &TrainingSet) -> Result<StepRecord> {
        let batch = self.next_batch(set)?;
        let lr = self.cfg.lr_at(self.step);
        let mut tape = Tape::new();
        let loss_var = self.forward_loss(&mut tape, &batch)?;
        let loss = tape.value(loss_var).item().expect("scalar loss") as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                step: self.step,
                detail: format!("loss {loss} on batch {}", batch.stats()),
            });
        }
        let grads = tape.backward(loss_var)?.into_params();
        adam_step(
            self.model.params_mut(),
            &grads,
            &mut self.adam,
            lr,
            &self.cfg.adam(),
        )
        .map_err(|e| match e {
            Error::NonFinite { detail, .. } => Error::NonFinite {
                step: self.step,
                detail: format!("{detail}; batch {}", batch.stats()),
            },
            other => other,
        })?;
        self.step += 1;
        Ok(StepRecord {
            step: self.step,
            scale: batch.scale,
            lr,
            loss,
        })
    }

    /// Trains until `max_updates` updates have been made in total.
    /// Checkpoints go to the observer every `checkpoint_every` updates and
    /// once at the end.
    pub fn run(
        &mut self,
        set: &TrainingSet,
        observer: &mut dyn TrainObserver,
    ) -> Result<Vec<StepRecord>> {
        self.check_data(set)?;
        let mut records = Vec::new();
        while self.step < self.cfg.max_updates {
            let rec = self.train_step(set)?;
            observer.on_step(&rec, self)?;
            records.push(rec);
            if rec.step % 100 == 0 {
                info!("step {} x{} loss {:.4}", rec.step, rec.scale, rec.loss);
            }
            if rec.step % self.cfg.checkpoint_every == 0 && rec.step < self.cfg.max_updates {
                observer.on_checkpoint(&self.checkpoint())?;
            }
        }
        let checkpoint = self.checkpoint();
        observer.on_checkpoint(&checkpoint)?;
        Ok(records)
    }
}

fn start(model: Model, cfg: &TrainConfig, resume: Option<&Checkpoint>) -> Result<Trainer> {
    match resume {
        None => Trainer::new(model, cfg.clone()),
        Some(ckpt) => {
            if &ckpt.config != model.config() {
                return Err(Error::config(
                    "resume checkpoint was written for a different model config",
                ));
            }
            Trainer::resume(ckpt, cfg.clone())
        }
    }
}

/// Trains a single-scale network.
pub fn train_single(
    model: Model,
    set: &TrainingSet,
    cfg: &TrainConfig,
    resume: Option<&Checkpoint>,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    if model.config().kind != ModelKind::Single {
        return Err(Error::config("train_single needs a single-scale model"));
    }
    let mut trainer = start(model, cfg, resume)?;
    let records = trainer.run(set, observer)?;
    Ok(TrainOutcome {
        checkpoint: trainer.checkpoint(),
        records,
    })
}

/// Trains a multi-scale network, drawing one scale per update.
pub fn train_multi(
    model: Model,
    set: &TrainingSet,
    cfg: &TrainConfig,
    resume: Option<&Checkpoint>,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    if model.config().kind != ModelKind::Multi {
        return Err(Error::config("train_multi needs a multi-scale model"));
    }
    let mut trainer = start(model, cfg, resume)?;
    let records = trainer.run(set, observer)?;
    Ok(TrainOutcome {
        checkpoint: trainer.checkpoint(),
        records,
    })
}
