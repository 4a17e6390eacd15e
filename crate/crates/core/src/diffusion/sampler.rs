use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::numeric::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Ddpm,
    Ddim,
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ddpm" => Ok(SamplerKind::Ddpm),
            "ddim" => Ok(SamplerKind::Ddim),
            other => Err(Error::Config(format!("unknown sampler {other:?} (expected ddpm or ddim)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    /// DDIM step count; ignored by DDPM.
    pub steps: usize,
    /// DDIM stochasticity, 0 = deterministic.
    pub eta: f64,
    /// DDPM only: `false` sets every `z` to zero.
    pub stochastic: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { kind: SamplerKind::Ddim, steps: 20, eta: 0.0, stochastic: true }
    }
}

pub fn standard_normal<R: Rng>(shape: &[usize], rng: &mut R) -> Tensor {
    Tensor::from_fn(shape, |_| rng.sample(StandardNormal))
}

fn check_state(x: &Tensor, step: usize) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::SamplingDivergence { step })
    }
}

fn check_eps(eps: &Tensor, x: &Tensor) -> Result<()> {
    eps.expect_same_shape(x)
}

fn clip(x: Tensor) -> Tensor {
    x.map(|v| v.clamp(0.0, 1.0))
}

/// Ancestral sampling from `x_T ~ N(0, I)` down to `x_0`, clipped to `[0, 1]`.
///
/// `model(x_t, t)` returns the noise estimate.
pub fn sample_ddpm<F, R>(mut model: F, shape: &[usize], sched: &NoiseSchedule, stochastic: bool, rng: &mut R) -> Result<Tensor>
where
    F: FnMut(&Tensor, usize) -> Result<Tensor>,
    R: Rng,
{
    let mut x = standard_normal(shape, rng);
    for t in (1..=sched.steps()).rev() {
        let eps = model(&x, t)?;
        check_eps(&eps, &x)?;
        let (a, b, ab) = (sched.alpha(t), sched.beta(t), sched.alpha_bar(t));
        let c = b / (1.0 - ab).sqrt();
        let inv = 1.0 / a.sqrt();
        let mut next = x.zip_map(&eps, |xv, e| inv * (xv - c * e))?;
        if stochastic && t > 1 {
            let sigma = (b * (1.0 - sched.alpha_bar(t - 1)) / (1.0 - ab)).sqrt();
            let z = standard_normal(shape, rng);
            next = next.zip_map(&z, |m, z| m + sigma * z)?;
        }
        check_state(&next, t)?;
        x = next;
    }
    Ok(clip(x))
}

/// The strided timestep grid `ceil(i T / S)` for `i = 1..=S`.
pub fn ddim_timesteps(t_diff: usize, steps: usize) -> Result<Vec<usize>> {
    if steps == 0 || steps > t_diff {
        return Err(Error::Config(format!("DDIM steps must be in 1..={t_diff}, got {steps}")));
    }
    Ok((1..=steps).map(|i| (i * t_diff).div_ceil(steps)).collect())
}

/// DDIM over [`ddim_timesteps`]; `eta = 0` is deterministic after the initial draw.
pub fn sample_ddim<F, R>(
    mut model: F,
    shape: &[usize],
    sched: &NoiseSchedule,
    steps: usize,
    eta: f64,
    rng: &mut R,
) -> Result<Tensor>
where
    F: FnMut(&Tensor, usize) -> Result<Tensor>,
    R: Rng,
{
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Config(format!("eta must lie in [0, 1], got {eta}")));
    }
    let grid = ddim_timesteps(sched.steps(), steps)?;
    let mut x = standard_normal(shape, rng);
    for i in (0..grid.len()).rev() {
        let t = grid[i];
        let t_prev = if i == 0 { 0 } else { grid[i - 1] };
        let eps = model(&x, t)?;
        check_eps(&eps, &x)?;
        let (ab, ab_prev) = (sched.alpha_bar(t), sched.alpha_bar(t_prev));
        let sigma = eta * ((1.0 - ab_prev) / (1.0 - ab) * (1.0 - ab / ab_prev)).sqrt();
        let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
        let dir = (1.0 - ab_prev - sigma * sigma).max(0.0).sqrt();
        let mut next = x.zip_map(&eps, |xv, e| ab_prev.sqrt() * (xv - sb * e) / sa + dir * e)?;
        if sigma > 0.0 {
            let z = standard_normal(shape, rng);
            next = next.zip_map(&z, |m, z| m + sigma * z)?;
        }
        check_state(&next, t)?;
        x = next;
    }
    Ok(clip(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::schedule::{build_schedule, ScheduleConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn truth() -> Tensor {
        Tensor::from_fn(&[4, 4, 2], |i| ((i * 37) % 11) as f64 / 10.0)
    }

    fn oracle<'a>(x0: &'a Tensor, s: &'a NoiseSchedule) -> impl FnMut(&Tensor, usize) -> Result<Tensor> + 'a {
        move |x, t| {
            let ab = s.alpha_bar(t);
            x.zip_map(x0, |xv, x0v| (xv - ab.sqrt() * x0v) / (1.0 - ab).sqrt())
        }
    }

    #[test]
    fn ddpm_oracle_recovery() {
        let s = NoiseSchedule::new(ScheduleConfig::default()).unwrap();
        let x0 = truth();
        for stochastic in [false, true] {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let out = sample_ddpm(oracle(&x0, &s), x0.shape(), &s, stochastic, &mut rng).unwrap();
            assert!(out.max_abs_diff(&x0) <= 1e-6);
        }
    }

    #[test]
    fn ddim_oracle_recovery() {
        let s = NoiseSchedule::new(ScheduleConfig::default()).unwrap();
        let x0 = truth();
        for steps in [1, 10, 50, 200] {
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let out = sample_ddim(oracle(&x0, &s), x0.shape(), &s, steps, 0.0, &mut rng).unwrap();
            assert!(out.max_abs_diff(&x0) <= 1e-6, "steps {steps}");
        }
    }

    fn smooth_model(x: &Tensor, t: usize) -> Result<Tensor> {
        Ok(x.map(|v| (v * 0.3 + t as f64 * 1e-3).tanh()))
    }

    #[test]
    fn ddim_full_eta_one_matches_ddpm() {
        let s = build_schedule(50, 1e-3, 0.05).unwrap();
        let a = sample_ddpm(smooth_model, &[3, 3, 1], &s, true, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = sample_ddim(smooth_model, &[3, 3, 1], &s, 50, 1.0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-9);
    }

    #[test]
    fn samplers_are_deterministic_and_clipped() {
        let s = NoiseSchedule::new(ScheduleConfig::default()).unwrap();
        let run = |steps| sample_ddim(smooth_model, &[4, 4, 3], &s, steps, 0.0, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let (a, b) = (run(10), run(50));
        assert_eq!(a, run(10));
        assert_ne!(a, b);
        for out in [a, b] {
            assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(out.shape(), &[4, 4, 3]);
        }
        let p = |seed| sample_ddpm(smooth_model, &[2, 2, 1], &s, true, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert_eq!(p(5), p(5));
    }

    #[test]
    fn timestep_grid() {
        assert_eq!(ddim_timesteps(200, 4).unwrap(), vec![50, 100, 150, 200]);
        assert_eq!(ddim_timesteps(10, 3).unwrap(), vec![4, 7, 10]);
        assert_eq!(ddim_timesteps(5, 5).unwrap(), vec![1, 2, 3, 4, 5]);
        assert!(ddim_timesteps(5, 6).is_err());
        assert!(ddim_timesteps(5, 0).is_err());
    }

    #[test]
    fn divergence_reports_step() {
        let s = build_schedule(10, 1e-3, 0.02).unwrap();
        let bad = |x: &Tensor, t: usize| Ok(x.map(|_| if t == 7 { f64::NAN } else { 0.0 }));
        let err = sample_ddpm(bad, &[2], &s, false, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, Error::SamplingDivergence { step: 7 }));
    }
}
