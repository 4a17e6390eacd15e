use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub t_diff: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { t_diff: 200, beta_start: 1e-4, beta_end: 0.02 }
    }
}

/// Linear-beta noise schedule. Tables are indexed by `t - 1` for `t` in `1..=T`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(cfg: ScheduleConfig) -> Result<Self> {
        build_schedule(cfg.t_diff, cfg.beta_start, cfg.beta_end)
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    /// `alpha_bar` with the `t = 0` extension equal to 1.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::Config(format!("diffusion step {t} outside 1..={}", self.steps())));
        }
        Ok(())
    }
}

pub fn build_schedule(t_diff: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if t_diff < 2 {
        return Err(Error::Config(format!("schedule needs at least 2 steps, got {t_diff}")));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::Config(format!("invalid beta range ({beta_start}, {beta_end})")));
    }
    let beta: Vec<f64> = (0..t_diff)
        .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (t_diff - 1) as f64)
        .collect();
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    // acc - acc * b rather than acc * (1 - b): no rounding of 1 - b enters the product.
    let alpha_bar = beta
        .iter()
        .scan(1.0, |acc: &mut f64, b| {
            *acc -= *acc * b;
            Some(*acc)
        })
        .collect();
    Ok(NoiseSchedule { beta, alpha, alpha_bar })
}

/// `sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps`.
pub fn forward_noise(x0: &Tensor, t: usize, eps: &Tensor, sched: &NoiseSchedule) -> Result<Tensor> {
    sched.check_step(t)?;
    let ab = sched.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    x0.zip_map(eps, |x, e| a * x + b * e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_step_products() {
        let s = build_schedule(2, 0.1, 0.2).unwrap();
        assert_eq!(s.alpha_bar, vec![0.9, 0.72]);
    }

    #[test]
    fn constant_beta() {
        let s = build_schedule(5, 0.1, 0.1).unwrap();
        assert!(s.beta.iter().all(|&b| b == 0.1));
    }

    #[test]
    fn invalid_ranges() {
        assert!(build_schedule(1, 0.1, 0.2).is_err());
        assert!(build_schedule(10, 0.0, 0.2).is_err());
        assert!(build_schedule(10, 0.3, 0.2).is_err());
        assert!(build_schedule(10, 0.1, 1.0).is_err());
    }

    #[test]
    fn forward_noise_cases() {
        let s = build_schedule(2, 0.1, 0.2).unwrap();
        let one = Tensor::full(&[1], 1.0);
        let xt = forward_noise(&one, 2, &one, &s).unwrap();
        assert!((xt.data()[0] - (0.72f64.sqrt() + 0.28f64.sqrt())).abs() < 1e-12);
        assert!((xt.data()[0] - 1.3778).abs() < 5e-4);
        let zero = Tensor::zeros(&[3]);
        let eps = Tensor::from_rows(&[&[1.0, -2.0, 0.5]]).reshape(&[3]).unwrap();
        let xt = forward_noise(&zero, 1, &eps, &s).unwrap();
        assert!(xt.max_abs_diff(&eps.map(|e| 0.1f64.sqrt() * e)) < 1e-15);
        assert!(forward_noise(&zero, 3, &eps, &s).is_err());
        assert!(forward_noise(&zero, 1, &Tensor::zeros(&[2]), &s).is_err());
        assert_eq!(s.alpha_bar(0), 1.0);
    }

    proptest! {
        #[test]
        fn alpha_bar_strictly_decreasing(t in 2usize..400, a in 1e-5f64..0.5, span in 0.0f64..0.49) {
            let s = build_schedule(t, a, a + span).unwrap();
            prop_assert!(s.alpha_bar[0] < 1.0);
            prop_assert!(s.alpha_bar.windows(2).all(|w| w[1] < w[0]));
            prop_assert!(s.alpha_bar.iter().all(|&v| v > 0.0 && v < 1.0));
            prop_assert_eq!(s.alpha_bar[0], 1.0 - s.beta[0]);
        }
    }
}
