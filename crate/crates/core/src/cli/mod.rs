//! Command-line front end. Flags override the `--config` file, which overrides defaults.

mod commands;
mod config;
mod render;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use commands::{
    ablate, ablation_run_dir, evaluate, gen_data, nowcast_split, persistence_report, train_model, AblationRow,
    AblationTable, TrainSummary,
};
pub use config::{RunConfig, RunPaths};
pub use render::{encode_pgm, render_pgm, strip};

use crate::diffusion::SamplerKind;
use crate::error::{Error, Result};
use crate::patch_grid::ReferenceMode;
use crate::radar::dataset::Split;
use crate::spen::SpenVariant;

#[derive(Debug, Parser)]
#[command(name = "radar-nowcast", version, about = "Patch-conditioned diffusion nowcasting on synthetic radar fields")]
pub struct Cli {
    /// Root seed for data, initialization, batches and sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON run configuration; flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic radar dataset.
    GenData(DataArgs),
    /// Train a denoiser on a dataset.
    Train(TrainArgs),
    /// Forecast every window of a split with a trained checkpoint.
    Nowcast(NowcastArgs),
    /// Score predictions (or persistence) against the test split.
    Evaluate(EvaluateArgs),
    /// Train and score all three encoding variants.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub sequences: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub cells: Option<usize>,
    #[arg(long)]
    pub noise_std: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// noembd, timeembd or spen.
    #[arg(long)]
    pub variant: Option<SpenVariant>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub token_size: Option<usize>,
    /// neighborhood or full-grid.
    #[arg(long)]
    pub reference_mode: Option<ReferenceMode>,
    #[arg(long)]
    pub t_diff: Option<usize>,
    #[arg(long)]
    pub beta_start: Option<f64>,
    #[arg(long)]
    pub beta_end: Option<f64>,
}

#[derive(Debug, Args)]
pub struct OptimArgs {
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub ckpt_every: Option<usize>,
    #[arg(long)]
    pub log_every: Option<usize>,
    #[arg(long)]
    pub val_samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Optimizer steps.
    #[arg(long)]
    pub steps: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Debug, Args)]
pub struct NowcastArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// ddim or ddpm.
    #[arg(long)]
    pub sampler: Option<SamplerKind>,
    /// DDIM steps.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// Write PGM strips (history, truth, forecast) under `images/`.
    #[arg(long)]
    pub images: bool,
    /// train, val or test.
    #[arg(long, default_value = "test")]
    pub split: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub target_tolerance: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Prediction directory; omit together with `--persistence`.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Score the persistence forecast instead of stored predictions.
    #[arg(long)]
    pub persistence: bool,
    #[command(flatten)]
    pub eval: EvalArgs,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Optimizer steps per run.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Seeds per variant.
    #[arg(long)]
    pub repeats: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long)]
    pub sampler: Option<SamplerKind>,
    #[arg(long)]
    pub sampler_steps: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[command(flatten)]
    pub eval: EvalArgs,
}

fn set<T>(dst: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *dst = v;
    }
}

impl DataArgs {
    fn apply(self, c: &mut RunConfig) {
        let g = &mut c.data.generator;
        set(&mut c.data.n_sequences, self.sequences);
        set(&mut g.frames, self.frames);
        set(&mut g.height, self.height);
        set(&mut g.width, self.width);
        set(&mut g.n_cells, self.cells);
        set(&mut g.noise_std, self.noise_std);
        set(&mut c.data.n, self.n);
        set(&mut c.data.m, self.m);
        set(&mut c.data.stride, self.stride);
    }
}

impl ModelArgs {
    fn apply(self, c: &mut RunConfig) {
        set(&mut c.model.variant, self.variant);
        set(&mut c.model.d, self.d);
        set(&mut c.model.blocks, self.blocks);
        set(&mut c.model.heads, self.heads);
        set(&mut c.model.patch_size, self.patch_size);
        set(&mut c.model.token_size, self.token_size);
        set(&mut c.train.reference_mode, self.reference_mode);
        set(&mut c.schedule.t_diff, self.t_diff);
        set(&mut c.schedule.beta_start, self.beta_start);
        set(&mut c.schedule.beta_end, self.beta_end);
    }
}

impl OptimArgs {
    fn apply(self, c: &mut RunConfig) {
        set(&mut c.train.batch, self.batch);
        set(&mut c.train.lr, self.lr);
        set(&mut c.train.weight_decay, self.weight_decay);
        set(&mut c.train.ckpt_every, self.ckpt_every);
        set(&mut c.train.log_every, self.log_every);
        set(&mut c.train.val_samples, self.val_samples);
    }
}

impl EvalArgs {
    fn apply(self, c: &mut RunConfig) {
        set(&mut c.threshold, self.threshold);
        if self.target_tolerance.is_some() {
            c.target_tolerance = self.target_tolerance;
        }
    }
}

fn required<'a>(flag: Option<&'a Path>, name: &str) -> Result<&'a Path> {
    flag.ok_or_else(|| Error::Config(format!("missing --{name}")))
}

fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(Error::Config(format!("unknown split {other:?}"))),
    }
}

fn report_tolerance(cfg: &RunConfig, mse: f64) {
    if let Some(tol) = cfg.target_tolerance {
        println!("target tolerance {tol}: {}", if mse <= tol { "met" } else { "not met" });
    }
}

/// Executes one parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.unwrap_or(cfg.seed);
    cfg = cfg.with_seed(seed);
    let out = cli.out;
    match cli.command {
        Command::GenData(a) => {
            a.apply(&mut cfg);
            let m = gen_data(&cfg, &out)?;
            println!(
                "{} windows ({} train / {} val / {} test) in {}",
                m.n_windows,
                m.split.train.len(),
                m.split.val.len(),
                m.split.test.len(),
                out.display()
            );
        }
        Command::Train(a) => {
            set(&mut cfg.train.steps, a.steps);
            a.model.apply(&mut cfg);
            a.optim.apply(&mut cfg);
            if a.data.is_some() {
                cfg.paths.data = a.data;
            }
            let data = required(cfg.paths.data.as_deref(), "data")?.to_path_buf();
            let s = train_model(&cfg, &data, &out)?;
            println!("trained {} steps, final loss {:?}, validation loss {:?} -> {:?}", s.steps, s.final_train_loss, s.val_loss_initial, s.val_loss_final);
        }
        Command::Nowcast(a) => {
            set(&mut cfg.sampler.kind, a.sampler);
            set(&mut cfg.sampler.steps, a.steps);
            set(&mut cfg.sampler.eta, a.eta);
            cfg.images |= a.images;
            if a.data.is_some() {
                cfg.paths.data = a.data;
            }
            if a.checkpoint.is_some() {
                cfg.paths.checkpoint = a.checkpoint;
            }
            let data = required(cfg.paths.data.as_deref(), "data")?.to_path_buf();
            let ckpt = required(cfg.paths.checkpoint.as_deref(), "checkpoint")?.to_path_buf();
            let split = parse_split(&a.split)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            cfg.save(&out.join("config.json"))?;
            let k = nowcast_split(&cfg, &data, &ckpt, &out, split)?;
            println!("{k} forecasts written to {}", out.display());
        }
        Command::Evaluate(a) => {
            a.eval.apply(&mut cfg);
            if a.data.is_some() {
                cfg.paths.data = a.data;
            }
            if a.pred.is_some() {
                cfg.paths.pred = a.pred;
            }
            let data = required(cfg.paths.data.as_deref(), "data")?.to_path_buf();
            let pred = if a.persistence { None } else { Some(required(cfg.paths.pred.as_deref(), "pred")?.to_path_buf()) };
            let r = evaluate(&cfg, pred.as_deref(), &data, &out)?;
            let psnr = r.psnr_db.map_or("inf".to_string(), |p| format!("{p:.2}"));
            println!("MSE {:.6}  PSNR {psnr}  SSIM {:.4}  ETS {:.4}  ACC {:.4}  ({} windows)", r.mse, r.ssim, r.ets, r.acc, r.n_windows);
            report_tolerance(&cfg, r.mse);
        }
        Command::Ablate(a) => {
            set(&mut cfg.train.steps, a.steps);
            set(&mut cfg.repeats, a.repeats);
            a.model.apply(&mut cfg);
            a.optim.apply(&mut cfg);
            set(&mut cfg.sampler.kind, a.sampler);
            set(&mut cfg.sampler.steps, a.sampler_steps);
            set(&mut cfg.sampler.eta, a.eta);
            a.eval.apply(&mut cfg);
            if a.data.is_some() {
                cfg.paths.data = a.data;
            }
            let data = required(cfg.paths.data.as_deref(), "data")?.to_path_buf();
            let table = ablate(&cfg, &data, &out)?;
            print!("{}", table.to_text());
        }
    }
    Ok(())
}
