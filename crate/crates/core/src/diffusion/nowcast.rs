use super::sampler::{sample_ddim, sample_ddpm, SamplerConfig, SamplerKind};
use super::schedule::NoiseSchedule;
use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::numeric::Tensor;
use crate::patch_grid::{patch_histories, reference_set, stitch, to_frames_first, PatchIndex, ReferenceMode, ReferencePatchSet};
use crate::rng::{self, domain};

/// Sampling settings shared by every patch of a nowcast.
#[derive(Clone, Debug)]
pub struct NowcastConfig {
    pub sampler: SamplerConfig,
    pub reference_mode: ReferenceMode,
    pub seed: u64,
}

/// Draws one `H x W x M` future for `target` from its references.
pub fn sample_patch(
    den: &Denoiser,
    refs: &ReferencePatchSet,
    target: PatchIndex,
    sched: &NoiseSchedule,
    sampler: &SamplerConfig,
    rng: &mut impl rand::Rng,
) -> Result<Tensor> {
    let p = den.config().patch_size;
    let shape = [p, p, den.config().m];
    let model = |x: &Tensor, t: usize| den.predict_noise(x, t, refs, target);
    match sampler.kind {
        SamplerKind::Ddpm => sample_ddpm(model, &shape, sched, sampler.stochastic, rng),
        SamplerKind::Ddim => sample_ddim(model, &shape, sched, sampler.steps, sampler.eta, rng),
    }
}

/// Full-field forecast `M x H x W` from `N x H x W` history.
///
/// Each patch is sampled independently from the stream `(seed, window, patch)`
/// and the tiles are stitched back together.
pub fn nowcast(history: &Tensor, den: &Denoiser, sched: &NoiseSchedule, cfg: &NowcastConfig, window: u64) -> Result<Tensor> {
    Ok(nowcast_tiles(history, den, sched, cfg, window)?.0)
}

/// As [`nowcast`], also returning the per-patch `M x p x p` tiles.
pub fn nowcast_tiles(
    history: &Tensor,
    den: &Denoiser,
    sched: &NoiseSchedule,
    cfg: &NowcastConfig,
    window: u64,
) -> Result<(Tensor, Vec<(PatchIndex, Tensor)>)> {
    let p = den.config().patch_size;
    let [n, h, w] = history.shape()[..] else {
        return Err(Error::Config(format!("history must be N x H x W, got {:?}", history.shape())));
    };
    if h % p != 0 || w % p != 0 {
        return Err(Error::Config(format!("{h}x{w} field does not tile into {p}-pixel patches")));
    }
    if n == 0 || n > den.config().capacity.time - den.config().m {
        return Err(Error::Config(format!("history length {n} does not fit the time capacity")));
    }
    let (grid, tiles) = patch_histories(history, p)?;
    let mut out = Vec::with_capacity(grid.len());
    for target in grid.iter() {
        let refs = reference_set(target, grid, &tiles, cfg.reference_mode)?;
        let mut rng = rng::stream(cfg.seed, domain::SAMPLER, window, target.linear_id as u64);
        let x = sample_patch(den, &refs, target, sched, &cfg.sampler, &mut rng)?;
        out.push((target, to_frames_first(&x)));
    }
    Ok((stitch(&out, grid)?, out))
}
