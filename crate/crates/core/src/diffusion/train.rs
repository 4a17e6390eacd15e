use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sampler::standard_normal;
use super::schedule::{forward_noise, NoiseSchedule, ScheduleConfig};
use crate::denoiser::{Denoiser, DenoiserConfig};
use crate::error::{Error, Result};
use crate::numeric::{Graph, ParamStore, Tensor};
use crate::patch_grid::{patch_histories, reference_set, GridShape, PatchIndex, ReferenceMode, ReferencePatchSet};
use crate::radar::{read_tensor_file, write_tensor_file, Window};
use crate::rng::{self, domain};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    /// Checkpoint period in steps; 0 writes only the final checkpoint.
    pub ckpt_every: usize,
    pub log_every: usize,
    pub seed: u64,
    pub reference_mode: ReferenceMode,
    /// Fixed draws used for the validation noise loss.
    pub val_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch: 4,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.01,
            ckpt_every: 0,
            log_every: 100,
            seed: 0,
            reference_mode: ReferenceMode::Neighborhood,
            val_samples: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::Config("batch must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.adam_eps <= 0.0 {
            return Err(Error::Config("invalid AdamW constants".into()));
        }
        Ok(())
    }
}

/// One window cut into per-patch tiles.
#[derive(Clone, Debug)]
pub struct PatchedWindow {
    /// `H x W x N` per linear patch id.
    pub history: Vec<Tensor>,
    /// `H x W x M` per linear patch id.
    pub future: Vec<Tensor>,
}

#[derive(Clone, Debug)]
pub struct PatchDataset {
    pub grid: GridShape,
    pub windows: Vec<PatchedWindow>,
    pub mode: ReferenceMode,
}

impl PatchDataset {
    pub fn new(windows: &[Window], patch: usize, mode: ReferenceMode) -> Result<Self> {
        let first = windows.first().ok_or_else(|| Error::Config("dataset is empty".into()))?;
        let (grid, _) = patch_histories(&first.history, patch)?;
        let windows = windows
            .iter()
            .map(|w| {
                let (g1, history) = patch_histories(&w.history, patch)?;
                let (g2, future) = patch_histories(&w.future, patch)?;
                if g1 != grid || g2 != grid {
                    return Err(Error::Config("windows have differing geometry".into()));
                }
                Ok(PatchedWindow { history, future })
            })
            .collect::<Result<_>>()?;
        Ok(Self { grid, windows, mode })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn example(&self, window: usize, target: PatchIndex) -> Result<(ReferencePatchSet, Tensor)> {
        let w = &self.windows[window];
        let refs = reference_set(target, self.grid, &w.history, self.mode)?;
        Ok((refs, w.future[target.linear_id].clone()))
    }
}

/// One term of the noise-prediction objective with its draw fixed.
#[derive(Clone, Debug)]
pub struct TrainingSample {
    pub refs: ReferencePatchSet,
    pub target: PatchIndex,
    /// Clean `H x W x M` future.
    pub x0: Tensor,
    pub t: usize,
    pub eps: Tensor,
}

impl TrainingSample {
    /// Draws window, target patch, step and noise from `rng`.
    pub fn draw<R: Rng>(data: &PatchDataset, sched: &NoiseSchedule, rng: &mut R) -> Result<Self> {
        let window = rng.gen_range(0..data.len());
        let target = data.grid.iter().nth(rng.gen_range(0..data.grid.len())).unwrap();
        let (refs, x0) = data.example(window, target)?;
        let t = rng.gen_range(1..=sched.steps());
        let eps = standard_normal(x0.shape(), rng);
        Ok(Self { refs, target, x0, t, eps })
    }
}

/// Mean squared noise error over the batch, with gradients in parameter order.
pub fn training_loss(den: &Denoiser, batch: &[TrainingSample], sched: &NoiseSchedule) -> Result<(f64, Vec<Tensor>)> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let mut grads = den.params().zeros_like();
    let mut total = 0.0;
    for s in batch {
        let (loss, g) = sample_loss(den, s, sched, true)?;
        total += loss;
        for (acc, gi) in grads.iter_mut().zip(g) {
            acc.add_assign(&gi);
        }
    }
    let k = batch.len() as f64;
    for g in &mut grads {
        g.data_mut().iter_mut().for_each(|v| *v /= k);
    }
    Ok((total / k, grads))
}

fn sample_loss(den: &Denoiser, s: &TrainingSample, sched: &NoiseSchedule, with_grad: bool) -> Result<(f64, Vec<Tensor>)> {
    let x_t = forward_noise(&s.x0, s.t, &s.eps, sched)?;
    let mut g = Graph::new();
    let f = den.forward(&mut g, &x_t, s.t, &s.refs, s.target)?;
    let eps = g.constant(s.eps.clone());
    let loss = g.mse(f.noise, eps)?;
    let value = g.value(loss).data()[0];
    if !with_grad {
        return Ok((value, Vec::new()));
    }
    g.backward(loss)?;
    Ok((value, g.param_grads(den.params())))
}

/// Noise loss without gradients, averaged over `samples`.
pub fn evaluation_loss(den: &Denoiser, samples: &[TrainingSample], sched: &NoiseSchedule) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        total += sample_loss(den, s, sched, false)?.0;
    }
    Ok(total / samples.len().max(1) as f64)
}

/// The fixed validation draws for `seed`.
pub fn validation_samples(data: &PatchDataset, sched: &NoiseSchedule, count: usize, seed: u64) -> Result<Vec<TrainingSample>> {
    (0..count)
        .map(|k| TrainingSample::draw(data, sched, &mut rng::stream(seed, domain::VALIDATION, k as u64, 0)))
        .collect()
}

#[derive(Clone, Debug)]
pub struct AdamW {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamW {
    pub fn new(params: &ParamStore) -> Self {
        Self { m: params.zeros_like(), v: params.zeros_like(), t: 0 }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor], cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let c2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for (i, p) in params.tensors_mut().iter_mut().enumerate() {
            let (m, v, g) = (self.m[i].data_mut(), self.v[i].data_mut(), grads[i].data());
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
                v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
                let update = (m[j] / c1) / ((v[j] / c2).sqrt() + cfg.adam_eps);
                *w -= cfg.lr * (update + cfg.weight_decay * *w);
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainState {
    pub denoiser: Denoiser,
    pub optimizer: AdamW,
    pub step: usize,
    pub seed: u64,
    pub loss_history: Vec<f64>,
}

impl TrainState {
    pub fn new(denoiser: Denoiser, seed: u64) -> Self {
        let optimizer = AdamW::new(denoiser.params());
        Self { denoiser, optimizer, step: 0, seed, loss_history: Vec::new() }
    }

    /// The batch for optimizer step `step` (0-based); sample `k` uses its own stream.
    pub fn batch(&self, data: &PatchDataset, sched: &NoiseSchedule, step: usize, size: usize) -> Result<Vec<TrainingSample>> {
        (0..size)
            .map(|k| TrainingSample::draw(data, sched, &mut rng::stream(self.seed, domain::TRAIN_SAMPLE, step as u64, k as u64)))
            .collect()
    }

    /// One optimizer step; returns the batch loss before the update.
    pub fn step_once(&mut self, data: &PatchDataset, sched: &NoiseSchedule, cfg: &TrainConfig) -> Result<f64> {
        let batch = self.batch(data, sched, self.step, cfg.batch)?;
        let (loss, grads) = training_loss(&self.denoiser, &batch, sched).map_err(|e| match e {
            Error::NonFinite(_) => Error::Divergence { step: self.step + 1, loss: f64::NAN },
            e => e,
        })?;
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence { step: self.step + 1, loss });
        }
        self.optimizer.step(self.denoiser.params_mut(), &grads, cfg);
        self.step += 1;
        self.loss_history.push(loss);
        Ok(loss)
    }
}

/// Runs `cfg.steps` optimizer steps, checkpointing into `ckpt_dir` if given.
pub fn train(
    mut state: TrainState,
    data: &PatchDataset,
    sched: &NoiseSchedule,
    cfg: &TrainConfig,
    ckpt: Option<(&Path, &CheckpointMeta)>,
) -> Result<TrainState> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let end = state.step + cfg.steps;
    while state.step < end {
        let loss = state.step_once(data, sched, cfg)?;
        if cfg.log_every > 0 && state.step % cfg.log_every == 0 {
            log::info!("step {} loss {:.5}", state.step, loss);
        }
        if let Some((dir, meta)) = ckpt {
            if cfg.ckpt_every > 0 && state.step % cfg.ckpt_every == 0 && state.step < end {
                let meta = CheckpointMeta { step: state.step, ..meta.clone() };
                save_checkpoint(&dir.join(format!("step_{:06}", state.step)), &state.denoiser, &meta)?;
            }
        }
    }
    Ok(state)
}

/// Everything needed besides the weights to rebuild a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub denoiser: DenoiserConfig,
    pub schedule: ScheduleConfig,
    pub reference_mode: ReferenceMode,
    pub n: usize,
    pub step: usize,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct CheckpointManifest {
    #[serde(flatten)]
    meta: CheckpointMeta,
    parameter_count: usize,
    params: Vec<ParamEntry>,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    file: String,
}

pub fn save_checkpoint(dir: &Path, den: &Denoiser, meta: &CheckpointMeta) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut params = Vec::new();
    for (name, t) in den.params().iter() {
        let file = format!("{name}.fgt");
        write_tensor_file(dir.join(&file), t)?;
        params.push(ParamEntry { name: name.to_string(), shape: t.shape().to_vec(), file });
    }
    let manifest = CheckpointManifest { meta: meta.clone(), parameter_count: den.params().scalar_count(), params };
    crate::radar::dataset::write_json(&dir.join("manifest.json"), &manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<(Denoiser, CheckpointMeta)> {
    let manifest: CheckpointManifest = crate::radar::dataset::read_json(&dir.join("manifest.json"))?;
    let mut params = ParamStore::new();
    for p in &manifest.params {
        let t = read_tensor_file(dir.join(&p.file))?;
        if t.shape() != p.shape.as_slice() {
            return Err(Error::Dimension(format!("parameter {} has shape {:?}, manifest says {:?}", p.name, t.shape(), p.shape)));
        }
        params.insert(p.name.clone(), t);
    }
    let den = Denoiser::from_params(manifest.meta.denoiser.clone(), params)?;
    Ok((den, manifest.meta))
}
