use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::render::{render_pgm, strip};
use crate::denoiser::{Denoiser, DenoiserConfig};
use crate::diffusion::{
    evaluation_loss, load_checkpoint, nowcast, save_checkpoint, train, validation_samples, CheckpointMeta, NoiseSchedule,
    NowcastConfig, PatchDataset, TrainState,
};
use crate::error::{Error, Result};
use crate::numeric::Tensor;
use crate::radar::dataset::{load_split, read_manifest, window_file_name, write_json, Split};
use crate::radar::{build_dataset, write_tensor_file, DatasetManifest, Window};
use crate::spen::SpenVariant;
use crate::verification::{evaluate_pairs, evaluate_run, persistence_baseline, write_metrics, MetricsReport};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn gen_data(cfg: &RunConfig, out: &Path) -> Result<DatasetManifest> {
    cfg.data.validate()?;
    create_dir(out)?;
    let manifest = build_dataset(&cfg.data, out)?;
    cfg.save(&out.join("config.json"))?;
    Ok(manifest)
}

/// Denoiser settings adapted to a dataset's geometry.
fn model_config(cfg: &RunConfig, manifest: &DatasetManifest) -> Result<DenoiserConfig> {
    let model = DenoiserConfig { m: manifest.m, ..cfg.model.clone() };
    model.validate()?;
    if manifest.n + manifest.m > model.capacity.time {
        return Err(Error::Config(format!(
            "N + M = {} exceeds the time index capacity {}",
            manifest.n + manifest.m,
            model.capacity.time
        )));
    }
    Ok(model)
}

fn split_windows(data_dir: &Path, manifest: &DatasetManifest, which: Split) -> Result<Vec<(usize, Window)>> {
    load_split(data_dir, manifest, which)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: usize,
    pub parameter_count: usize,
    pub final_train_loss: Option<f64>,
    pub val_loss_initial: Option<f64>,
    pub val_loss_final: Option<f64>,
}

/// Trains on the dataset's training split; writes `checkpoint/`, `loss.csv` and `train_summary.json`.
pub fn train_model(cfg: &RunConfig, data_dir: &Path, out: &Path) -> Result<TrainSummary> {
    let manifest = read_manifest(data_dir)?;
    let model = model_config(cfg, &manifest)?;
    let sched = NoiseSchedule::new(cfg.schedule)?;
    let strip_ids = |v: Vec<(usize, Window)>| v.into_iter().map(|(_, w)| w).collect::<Vec<_>>();
    let train_windows = strip_ids(split_windows(data_dir, &manifest, Split::Train)?);
    if train_windows.is_empty() {
        return Err(Error::Config(format!("{}: training split is empty", data_dir.display())));
    }
    let data = PatchDataset::new(&train_windows, model.patch_size, cfg.train.reference_mode)?;
    let val_windows = strip_ids(split_windows(data_dir, &manifest, Split::Val)?);
    let val = if val_windows.is_empty() || cfg.train.val_samples == 0 {
        None
    } else {
        let vdata = PatchDataset::new(&val_windows, model.patch_size, cfg.train.reference_mode)?;
        Some(validation_samples(&vdata, &sched, cfg.train.val_samples, cfg.train.seed)?)
    };

    create_dir(out)?;
    cfg.save(&out.join("config.json"))?;
    let den = Denoiser::new(model.clone())?;
    log::info!("denoiser with {} parameters", den.params().scalar_count());
    let val_loss_initial = val.as_ref().map(|v| evaluation_loss(&den, v, &sched)).transpose()?;
    let meta = CheckpointMeta {
        denoiser: model,
        schedule: cfg.schedule,
        reference_mode: cfg.train.reference_mode,
        n: manifest.n,
        step: 0,
        seed: cfg.train.seed,
    };
    let ckpt_root = out.join("checkpoints");
    let state = train(TrainState::new(den, cfg.train.seed), &data, &sched, &cfg.train, Some((&ckpt_root, &meta)))?;
    let val_loss_final = val.as_ref().map(|v| evaluation_loss(&state.denoiser, v, &sched)).transpose()?;
    save_checkpoint(&out.join("checkpoint"), &state.denoiser, &CheckpointMeta { step: state.step, ..meta })?;

    let mut csv = String::from("step,loss\n");
    for (i, l) in state.loss_history.iter().enumerate() {
        let _ = writeln!(csv, "{},{}", i + 1, l);
    }
    let path = out.join("loss.csv");
    fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    let summary = TrainSummary {
        steps: state.step,
        parameter_count: state.denoiser.params().scalar_count(),
        final_train_loss: state.loss_history.last().copied(),
        val_loss_initial,
        val_loss_final,
    };
    write_json(&out.join("train_summary.json"), &summary)?;
    Ok(summary)
}

/// Writes one `M x H x W` prediction per window of `split` into `out`.
pub fn nowcast_split(cfg: &RunConfig, data_dir: &Path, ckpt_dir: &Path, out: &Path, split: Split) -> Result<usize> {
    let manifest = read_manifest(data_dir)?;
    let (den, meta) = load_checkpoint(ckpt_dir)?;
    if meta.n != manifest.n || meta.denoiser.m != manifest.m {
        return Err(Error::Config(format!(
            "checkpoint expects N={}, M={} but the dataset has N={}, M={}",
            meta.n, meta.denoiser.m, manifest.n, manifest.m
        )));
    }
    let sched = NoiseSchedule::new(meta.schedule)?;
    let nc = NowcastConfig { sampler: cfg.sampler, reference_mode: meta.reference_mode, seed: cfg.seed };
    create_dir(out)?;
    let windows = split_windows(data_dir, &manifest, split)?;
    if cfg.images {
        create_dir(&out.join("images"))?;
    }
    for (i, w) in &windows {
        let pred = nowcast(&w.history, &den, &sched, &nc, *i as u64)?;
        write_tensor_file(out.join(window_file_name(*i)), &pred)?;
        if cfg.images {
            let img = strip(&[&w.history, &w.future, &pred])?;
            render_pgm(&img, &out.join("images").join(format!("window_{i:06}.pgm")))?;
        }
        log::info!("window {i} done");
    }
    Ok(windows.len())
}

/// Scores the persistence forecast on the test split.
pub fn persistence_report(data_dir: &Path, threshold: f64) -> Result<MetricsReport> {
    let manifest = read_manifest(data_dir)?;
    let pairs = split_windows(data_dir, &manifest, Split::Test)?
        .into_iter()
        .map(|(_, w)| Ok((persistence_baseline(&w.history, manifest.m)?, w.future)))
        .collect::<Result<Vec<(Tensor, Tensor)>>>()?;
    evaluate_pairs(&pairs, threshold)
}

pub fn evaluate(cfg: &RunConfig, pred_dir: Option<&Path>, data_dir: &Path, out: &Path) -> Result<MetricsReport> {
    let report = match pred_dir {
        Some(p) => evaluate_run(p, data_dir, cfg.threshold)?,
        None => persistence_report(data_dir, cfg.threshold)?,
    };
    create_dir(out)?;
    cfg.save(&out.join("config.json"))?;
    write_metrics(&out.join("metrics.json"), &report)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub mse: f64,
    pub psnr_db: Option<f64>,
    pub ssim: f64,
    pub ets: f64,
    pub acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    pub threshold: f64,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_text(&self) -> String {
        let mut s = format!("{:<10} {:>10} {:>8} {:>7} {:>7} {:>7}\n", "variant", "MSE", "PSNR", "SSIM", "ETS", "ACC");
        for r in &self.rows {
            let psnr = r.psnr_db.map_or("inf".to_string(), |p| format!("{p:.2}"));
            let _ = writeln!(s, "{:<10} {:>10.6} {:>8} {:>7.4} {:>7.4} {:>7.4}", r.variant, r.mse, psnr, r.ssim, r.ets, r.acc);
        }
        s
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n.max(1) as f64
}

/// Where `ablate` keeps the artifacts of one variant and seed.
pub fn ablation_run_dir(out: &Path, variant: SpenVariant, seed: u64) -> PathBuf {
    out.join(variant.to_string()).join(format!("seed_{seed}"))
}

/// Trains, forecasts and scores every variant for `cfg.repeats` seeds.
pub fn ablate(cfg: &RunConfig, data_dir: &Path, out: &Path) -> Result<AblationTable> {
    if cfg.repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    create_dir(out)?;
    cfg.save(&out.join("config.json"))?;
    let seeds: Vec<u64> = (0..cfg.repeats as u64).map(|r| cfg.seed + r).collect();
    let mut rows = Vec::new();
    for variant in SpenVariant::ALL {
        let mut reports = Vec::new();
        for &seed in &seeds {
            let mut run = cfg.clone().with_seed(seed);
            run.data = cfg.data.clone();
            run.model.variant = variant;
            let dir = ablation_run_dir(out, variant, seed);
            log::info!("ablation: {} seed {seed}", variant.label());
            train_model(&run, data_dir, &dir)?;
            nowcast_split(&run, data_dir, &dir.join("checkpoint"), &dir.join("pred"), Split::Test)?;
            reports.push(evaluate(&run, Some(&dir.join("pred")), data_dir, &dir)?);
        }
        let psnr = if reports.iter().all(|r| r.psnr_db.is_some()) {
            Some(mean(reports.iter().map(|r| r.psnr())))
        } else {
            None
        };
        rows.push(AblationRow {
            variant: variant.label().to_string(),
            mse: mean(reports.iter().map(|r| r.mse)),
            psnr_db: psnr,
            ssim: mean(reports.iter().map(|r| r.ssim)),
            ets: mean(reports.iter().map(|r| r.ets)),
            acc: mean(reports.iter().map(|r| r.acc)),
        });
    }
    let table = AblationTable { seeds, threshold: cfg.threshold, rows };
    write_json(&out.join("ablation.json"), &table)?;
    let path = out.join("ablation.txt");
    fs::write(&path, table.to_text()).map_err(|e| Error::io(&path, e))?;
    Ok(table)
}
