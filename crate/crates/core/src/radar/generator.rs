use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Tensor;
use crate::rng::{self, domain};

/// A gridded reflectivity movie normalized to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RadarSequence {
    /// `frames x height x width`
    pub frames: Tensor,
    pub frame_interval_minutes: f64,
}

impl RadarSequence {
    pub fn n_frames(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.frames.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.frames.shape()[2]
    }

    pub fn frame(&self, t: usize) -> Tensor {
        self.frames.index_axis0(t)
    }
}

/// A Gaussian convective cell advected across a periodic domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StormCell {
    pub center: (f64, f64),
    pub velocity: (f64, f64),
    pub amplitude: f64,
    pub radius: f64,
    pub growth_rate: f64,
}

impl StormCell {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude > 0.0 && self.amplitude <= 1.0) {
            return Err(Error::Config(format!("cell amplitude {} outside (0, 1]", self.amplitude)));
        }
        if !(self.radius > 0.0) {
            return Err(Error::Config(format!("cell radius {} must be positive", self.radius)));
        }
        if !(self.growth_rate > 0.0) {
            return Err(Error::Config(format!("cell growth rate {} must be positive", self.growth_rate)));
        }
        Ok(())
    }

    fn center_at(&self, t: usize, height: usize, width: usize) -> (f64, f64) {
        let r = (self.center.0 + self.velocity.0 * t as f64).rem_euclid(height as f64);
        let c = (self.center.1 + self.velocity.1 * t as f64).rem_euclid(width as f64);
        (r, c)
    }

    fn amplitude_at(&self, t: usize) -> f64 {
        (self.amplitude * self.growth_rate.powi(t as i32)).min(1.0)
    }
}

/// Distributions cells are drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CellPrior {
    pub speed: (f64, f64),
    pub amplitude: (f64, f64),
    pub radius: (f64, f64),
    pub growth_rate: (f64, f64),
}

impl Default for CellPrior {
    fn default() -> Self {
        Self {
            speed: (0.5, 1.5),
            amplitude: (0.5, 1.0),
            radius: (2.5, 5.0),
            growth_rate: (0.97, 1.03),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub n_cells: usize,
    pub noise_std: f64,
    pub frame_interval_minutes: f64,
    pub prior: CellPrior,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            frames: 20,
            height: 64,
            width: 64,
            n_cells: 8,
            noise_std: 0.01,
            frame_interval_minutes: 6.0,
            prior: CellPrior::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames < 10 {
            return Err(Error::Config(format!("need at least 10 frames, got {}", self.frames)));
        }
        if self.height < 32 || self.width < 32 {
            return Err(Error::Config(format!(
                "field must be at least 32x32, got {}x{}",
                self.height, self.width
            )));
        }
        if !(self.noise_std >= 0.0) || !(self.frame_interval_minutes > 0.0) {
            return Err(Error::Config("noise std must be >= 0 and frame interval > 0".into()));
        }
        Ok(())
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Draws `cfg.n_cells` cells for the sequence keyed by `(seed, index)`.
pub fn sample_cells(seed: u64, index: u64, cfg: &GeneratorConfig) -> Vec<StormCell> {
    let mut rng = rng::stream(seed, domain::SEQUENCE, index, 0);
    (0..cfg.n_cells)
        .map(|_| {
            let center = (rng.gen_range(0.0..cfg.height as f64), rng.gen_range(0.0..cfg.width as f64));
            let speed = uniform(&mut rng, cfg.prior.speed);
            let heading = rng.gen_range(0.0..std::f64::consts::TAU);
            StormCell {
                center,
                velocity: (speed * heading.sin(), speed * heading.cos()),
                amplitude: uniform(&mut rng, cfg.prior.amplitude),
                radius: uniform(&mut rng, cfg.prior.radius),
                growth_rate: uniform(&mut rng, cfg.prior.growth_rate),
            }
        })
        .collect()
}

/// Renders cells on a periodic grid with additive Gaussian noise, clipped to `[0, 1]`.
pub fn render_cells(
    cells: &[StormCell],
    frames: usize,
    height: usize,
    width: usize,
    noise_std: f64,
    noise_seed: u64,
) -> Result<RadarSequence> {
    for c in cells {
        c.validate()?;
    }
    let mut data = vec![0.0; frames * height * width];
    let (hf, wf) = (height as f64, width as f64);
    for t in 0..frames {
        let frame = &mut data[t * height * width..(t + 1) * height * width];
        for cell in cells {
            let (cr, cc) = cell.center_at(t, height, width);
            let amp = cell.amplitude_at(t);
            let denom = 2.0 * cell.radius * cell.radius;
            for r in 0..height {
                let mut dr = (r as f64 - cr).abs();
                dr = dr.min(hf - dr);
                for c in 0..width {
                    let mut dc = (c as f64 - cc).abs();
                    dc = dc.min(wf - dc);
                    frame[r * width + c] += amp * (-(dr * dr + dc * dc) / denom).exp();
                }
            }
        }
    }
    if noise_std > 0.0 {
        let normal = Normal::new(0.0, noise_std).map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = rng::stream(noise_seed, domain::SEQUENCE, u64::MAX, 1);
        for v in &mut data {
            *v += normal.sample(&mut rng);
        }
    }
    for v in &mut data {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(RadarSequence {
        frames: Tensor::new(vec![frames, height, width], data)?,
        frame_interval_minutes: 6.0,
    })
}

/// One synthetic sequence; fully determined by `seed` and the configuration.
pub fn generate_sequence(seed: u64, cfg: &GeneratorConfig) -> Result<RadarSequence> {
    generate_indexed(seed, 0, cfg)
}

/// The `index`-th sequence of a dataset keyed by `seed`.
pub fn generate_indexed(seed: u64, index: u64, cfg: &GeneratorConfig) -> Result<RadarSequence> {
    cfg.validate()?;
    let cells = sample_cells(seed, index, cfg);
    let mut seq = render_cells(
        &cells,
        cfg.frames,
        cfg.height,
        cfg.width,
        cfg.noise_std,
        rng::stream_id(domain::SEQUENCE, seed, index),
    )?;
    seq.frame_interval_minutes = cfg.frame_interval_minutes;
    Ok(seq)
}
