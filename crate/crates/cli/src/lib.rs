//! `srforge` subcommands. The binary in `main.rs` only parses arguments,
//! sets up logging and maps the outcome to an exit code.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use srforge::data::{prepare, PrepareOptions, TrainingSet, MANIFEST_FILE};
use srforge::imaging::{bicubic_baseline, self_ensemble, score_pair, Convention, EvalReport};
use srforge::model::ModelConfigFile;
use srforge::train::{train_multi, train_single, StepRecord, TrainObserver, Trainer};
use srforge::{Checkpoint, FloatImage, Image, Model, ModelKind, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "srforge", version, about = "Residual super-resolution: prepare, train, upscale, evaluate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Crop HR images, generate bicubic LR images and write a manifest.
    Prepare(PrepareArgs),
    /// Train a model on a prepared dataset.
    Train(TrainArgs),
    /// Super-resolve images with a checkpoint.
    Sr(SrArgs),
    /// Score SR images against ground truth.
    Eval(EvalArgs),
    /// Print a checkpoint's config, tensors and step.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Directory of HR PNG images.
    #[arg(long)]
    pub hr_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    pub scales: Vec<u32>,
    /// Image stems (file names without extension) for the validation split.
    #[arg(long, value_delimiter = ',')]
    pub val: Vec<String>,
    #[arg(long)]
    pub dataset: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Manifest written by `prepare` (or the directory holding it).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Model config file; optional when resuming.
    #[arg(long)]
    pub model_config: Option<PathBuf>,
    #[arg(long)]
    pub train_config: PathBuf,
    /// Continue a run from one of its checkpoints.
    #[arg(long, conflicts_with = "pretrained")]
    pub resume: Option<PathBuf>,
    /// Initialise matching tensors from another model's checkpoint.
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
    /// Overrides the seed in the training config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory for checkpoints and the loss log.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SrArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Required for multi-scale checkpoints.
    #[arg(long)]
    pub scale: Option<u32>,
    /// Average over the eight flips and rotations.
    #[arg(long)]
    pub self_ensemble: bool,
    /// Output directory; files keep their input names.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    /// Y channel, `scale` border pixels dropped.
    Benchmark,
    /// RGB, `6 + scale` border pixels dropped.
    Div2k,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// SR images, paired with ground truth by file name.
    #[arg(long, required_unless_present = "bicubic")]
    pub sr_dir: Option<PathBuf>,
    #[arg(long)]
    pub gt_dir: PathBuf,
    #[arg(long)]
    pub scale: u32,
    #[arg(long, value_enum, default_value_t = ConventionArg::Benchmark)]
    pub convention: ConventionArg,
    /// Score the bicubic baseline of each ground-truth image instead.
    #[arg(long, conflicts_with = "sr_dir")]
    pub bicubic: bool,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub checkpoint: PathBuf,
}

/// Whether a command finished without per-item error records.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Clean,
    ItemErrors,
}

impl From<Outcome> for ExitCode {
    fn from(o: Outcome) -> Self {
        match o {
            Outcome::Clean => ExitCode::SUCCESS,
            Outcome::ItemErrors => ExitCode::FAILURE,
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<Outcome> {
    match cli.command {
        Command::Prepare(a) => cmd_prepare(&a, out),
        Command::Train(a) => cmd_train(&a, out),
        Command::Sr(a) => cmd_sr(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Inspect(a) => cmd_inspect(&a, out),
    }
}

pub fn cmd_prepare(a: &PrepareArgs, out: &mut dyn Write) -> Result<Outcome> {
    let opts = PrepareOptions {
        dataset: a.dataset.clone(),
        val: a.val.clone(),
    };
    let p = prepare(&a.hr_dir, &a.out, &a.scales, &opts)?;
    for (path, why) in &p.skipped {
        writeln!(out, "skipped\t{}\t{why}", path.display())?;
    }
    let m = &p.manifest;
    writeln!(
        out,
        "prepared {} images ({} skipped) at scales {:?}; rgb_mean {:?}",
        m.entries.len(),
        p.skipped.len(),
        m.scales,
        m.rgb_mean
    )?;
    writeln!(out, "manifest: {}", a.out.join(MANIFEST_FILE).display())?;
    Ok(if p.skipped.is_empty() {
        Outcome::Clean
    } else {
        Outcome::ItemErrors
    })
}

fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(MANIFEST_FILE)
    } else {
        p.to_owned()
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn checkpoint_name(step: u64) -> String {
    format!("model_{step:07}.srfg")
}

struct RunWriter<'a> {
    dir: PathBuf,
    log: fs::File,
    out: &'a mut dyn Write,
    written: Vec<PathBuf>,
}

impl TrainObserver for RunWriter<'_> {
    fn on_step(&mut self, rec: &StepRecord, _: &Trainer) -> srforge::Result<()> {
        writeln!(self.log, "{}", rec.log_line())?;
        Ok(())
    }

    fn on_checkpoint(&mut self, c: &Checkpoint) -> srforge::Result<()> {
        let path = self.dir.join(checkpoint_name(c.step));
        c.save(&path)?;
        writeln!(self.out, "checkpoint {}", path.display())?;
        self.written.push(path);
        Ok(())
    }
}

pub fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<Outcome> {
    let mut cfg = TrainConfig::parse(&read(&a.train_config)?)
        .with_context(|| format!("in {}", a.train_config.display()))?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let manifest = manifest_path(&a.manifest);
    let set = TrainingSet::load(&manifest)?;

    let resume = a
        .resume
        .as_ref()
        .map(|p| Checkpoint::load(p).with_context(|| format!("loading {}", p.display())))
        .transpose()?;
    let model_cfg = match (&a.model_config, &resume) {
        (Some(path), _) => ModelConfigFile::parse(&read(path)?)
            .and_then(|f| f.resolve(Some(set.rgb_mean)))
            .with_context(|| format!("in {}", path.display()))?,
        (None, Some(ckpt)) => ckpt.config.clone(),
        (None, None) => bail!("--model-config is required unless --resume is given"),
    };
    let mut model = Model::build(&model_cfg, cfg.seed)?;

    if let Some(path) = &a.pretrained {
        let source = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
        let report = model.transfer_from(&source)?;
        writeln!(
            out,
            "transfer from {}: copied {} tensors, skipped {}{}",
            path.display(),
            report.copied.len(),
            report.skipped.len(),
            if report.skipped.is_empty() {
                String::new()
            } else {
                format!(" ({})", report.skipped.join(", "))
            }
        )?;
    }

    fs::create_dir_all(&a.out)?;
    let log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(a.out.join("loss.log"))?;
    let mut writer = RunWriter {
        dir: a.out.clone(),
        log,
        out,
        written: Vec::new(),
    };
    let outcome = match model_cfg.kind {
        ModelKind::Single => train_single(model, &set, &cfg, resume.as_ref(), &mut writer)?,
        ModelKind::Multi => train_multi(model, &set, &cfg, resume.as_ref(), &mut writer)?,
    };
    let tail: Vec<f64> = outcome.records.iter().rev().take(100).map(|r| r.loss).collect();
    if !tail.is_empty() {
        writeln!(
            writer.out,
            "finished at step {}; mean loss over the last {} updates {:.4}",
            outcome.checkpoint.step,
            tail.len(),
            tail.iter().sum::<f64>() / tail.len() as f64
        )?;
    }
    Ok(Outcome::Clean)
}

pub fn cmd_sr(a: &SrArgs, out: &mut dyn Write) -> Result<Outcome> {
    let ckpt = Checkpoint::load(&a.checkpoint)
        .with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let model = ckpt.model()?;
    let cfg = model.config();
    let scale = match (a.scale, cfg.single_scale()) {
        (Some(s), _) => s,
        (None, Some(s)) => s,
        (None, None) => bail!("--scale is required for a multi-scale checkpoint ({:?})", cfg.scales),
    };
    if !cfg.supports(scale) {
        bail!("checkpoint serves scales {:?}, not x{scale}", cfg.scales);
    }
    fs::create_dir_all(&a.out)?;
    for input in &a.inputs {
        let img = Image::open(input)?;
        let x = img.to_float().to_tensor();
        let y = if a.self_ensemble {
            self_ensemble(&model, &x, scale)?
        } else {
            model.infer(&x, scale)?
        };
        let name = input
            .file_stem()
            .with_context(|| format!("{} has no file name", input.display()))?;
        let path = a.out.join(Path::new(name).with_extension("png"));
        FloatImage::from_tensor(&y, 0)?.quantize().save_png(&path)?;
        writeln!(out, "{} -> {}", input.display(), path.display())?;
    }
    Ok(Outcome::Clean)
}

fn pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    v.sort();
    Ok(v)
}

pub fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<Outcome> {
    let convention = match a.convention {
        ConventionArg::Benchmark => Convention::benchmark(a.scale),
        ConventionArg::Div2k => Convention::div2k(a.scale),
    };
    let gt = pngs(&a.gt_dir)?;
    if gt.is_empty() {
        bail!("no PNG images in {}", a.gt_dir.display());
    }
    let results: Vec<(String, Result<srforge::imaging::Score>)> = gt
        .par_iter()
        .map(|gt_path| {
            let name = gt_path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let score = (|| -> Result<_> {
                let gt_img = Image::open(gt_path)?;
                match &a.sr_dir {
                    Some(dir) if !a.bicubic => {
                        let sr_img = Image::open(dir.join(&name))?;
                        Ok(score_pair(&sr_img, &gt_img, &convention)?)
                    }
                    _ => Ok(bicubic_baseline(&gt_img, &convention)?),
                }
            })();
            (name, score)
        })
        .collect();

    let mut report = EvalReport::new(convention);
    for (name, r) in results {
        match r {
            Ok(s) => report.push(name, s),
            Err(e) => report.failures.push((name, format!("{e:#}"))),
        }
    }
    report.sort();
    write!(out, "{}", report.to_text())?;
    Ok(if report.failures.is_empty() {
        Outcome::Clean
    } else {
        Outcome::ItemErrors
    })
}

/// `1234567` → `"1,234,567"`.
pub fn group_thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut s = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            s.push(',');
        }
        s.push(ch);
    }
    s
}

pub fn cmd_inspect(a: &InspectArgs, out: &mut dyn Write) -> Result<Outcome> {
    let ckpt = Checkpoint::load(&a.checkpoint)
        .with_context(|| format!("reading {}", a.checkpoint.display()))?;
    let c = &ckpt.config;
    let kind = match c.kind {
        ModelKind::Single => "single",
        ModelKind::Multi => "multi",
    };
    writeln!(out, "checkpoint: {}", a.checkpoint.display())?;
    writeln!(out, "kind: {kind}")?;
    writeln!(out, "num_blocks: {}", c.num_blocks)?;
    writeln!(out, "num_feats: {}", c.num_feats)?;
    writeln!(out, "scales: {:?}", c.scales)?;
    writeln!(out, "res_scale: {}", c.res_scale)?;
    writeln!(out, "rgb_mean: {:?}", c.rgb_mean)?;
    writeln!(out, "step: {}", ckpt.step)?;
    writeln!(out, "params: {}", group_thousands(ckpt.params.scalar_count()))?;
    writeln!(out, "optimizer state: {} tensors", ckpt.adam.len())?;
    for (name, p) in ckpt.params.iter() {
        writeln!(out, "  {name} {:?}", p.dims())?;
    }
    Ok(Outcome::Clean)
}
