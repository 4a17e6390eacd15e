//! Forecast verification: pixel errors, structural similarity and
//! thresholded event scores.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Tensor;
use crate::radar::dataset::{read_manifest, split_path, window_file_name, write_json, Split};
use crate::radar::{read_tensor_file, Window};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

pub fn mse(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    pred.expect_same_shape(truth)?;
    let n = pred.len().max(1) as f64;
    Ok(pred.data().iter().zip(truth.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
}

/// PSNR in dB for a known MSE; zero error gives `+inf`.
pub fn psnr_from_mse(mse: f64, max_val: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (max_val * max_val / mse).log10()
    }
}

pub fn psnr(pred: &Tensor, truth: &Tensor, max_val: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(pred, truth)?, max_val))
}

fn gaussian_window() -> Vec<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// SSIM of two `H x W` images, averaged over valid window positions.
pub fn ssim_2d(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.expect_same_shape(b)?;
    let [h, w] = a.shape()[..] else {
        return Err(Error::Dimension(format!("SSIM expects 2-D images, got {:?}", a.shape())));
    };
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Config(format!("{h}x{w} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")));
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let g = gaussian_window();
    let (x, y) = (a.data(), b.data());
    let mut total = 0.0;
    for r in 0..=h - SSIM_WINDOW {
        for c in 0..=w - SSIM_WINDOW {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..SSIM_WINDOW {
                for j in 0..SSIM_WINDOW {
                    let k = g[i] * g[j];
                    let idx = (r + i) * w + c + j;
                    mx += k * x[idx];
                    my += k * y[idx];
                    sxx += k * x[idx] * x[idx];
                    syy += k * y[idx] * y[idx];
                    sxy += k * x[idx] * y[idx];
                }
            }
            let (vx, vy, cov) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    Ok(total / ((h - SSIM_WINDOW + 1) * (w - SSIM_WINDOW + 1)) as f64)
}

/// SSIM of `H x W` images or the mean over the slices of `M x H x W` stacks.
pub fn ssim(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    pred.expect_same_shape(truth)?;
    match pred.rank() {
        2 => ssim_2d(pred, truth),
        3 => {
            let m = pred.shape()[0];
            let mut s = 0.0;
            for i in 0..m {
                s += ssim_2d(&pred.index_axis0(i), &truth.index_axis0(i))?;
            }
            Ok(s / m as f64)
        }
        _ => Err(Error::Dimension(format!("SSIM expects rank 2 or 3, got {:?}", pred.shape()))),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub hits: u64,
    pub misses: u64,
    pub false_alarms: u64,
    pub correct_negatives: u64,
    pub threshold: f64,
}

impl ContingencyTable {
    pub fn total(&self) -> u64 {
        self.hits + self.misses + self.false_alarms + self.correct_negatives
    }

    /// Pooled counts of two tables at the same threshold.
    pub fn merge(&self, other: &ContingencyTable) -> ContingencyTable {
        ContingencyTable {
            hits: self.hits + other.hits,
            misses: self.misses + other.misses,
            false_alarms: self.false_alarms + other.false_alarms,
            correct_negatives: self.correct_negatives + other.correct_negatives,
            threshold: self.threshold,
        }
    }
}

/// Pixel-wise event counts; an event is a value `>= threshold`.
pub fn contingency(pred: &Tensor, truth: &Tensor, threshold: f64) -> Result<ContingencyTable> {
    pred.expect_same_shape(truth)?;
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!("event threshold {threshold} outside (0, 1)")));
    }
    let mut t = ContingencyTable { threshold, ..Default::default() };
    for (&p, &o) in pred.data().iter().zip(truth.data()) {
        match (p >= threshold, o >= threshold) {
            (true, true) => t.hits += 1,
            (false, true) => t.misses += 1,
            (true, false) => t.false_alarms += 1,
            (false, false) => t.correct_negatives += 1,
        }
    }
    Ok(t)
}

/// Equitable threat score; a zero denominator yields 0.
pub fn ets(t: &ContingencyTable) -> f64 {
    let total = t.total() as f64;
    if total == 0.0 {
        return 0.0;
    }
    let (h, mi, f) = (t.hits as f64, t.misses as f64, t.false_alarms as f64);
    let h_rand = (h + mi) * (h + f) / total;
    let denom = h + mi + f - h_rand;
    if denom == 0.0 {
        0.0
    } else {
        (h - h_rand) / denom
    }
}

pub fn acc(t: &ContingencyTable) -> f64 {
    let total = t.total();
    if total == 0 {
        return 0.0;
    }
    (t.hits + t.correct_negatives) as f64 / total as f64
}

/// Repeats the last of `N x H x W` history frames `m` times.
pub fn persistence_baseline(history: &Tensor, m: usize) -> Result<Tensor> {
    let [n, _, _] = history.shape()[..] else {
        return Err(Error::Dimension(format!("history must be N x H x W, got {:?}", history.shape())));
    };
    if n == 0 {
        return Err(Error::Dimension("empty history".into()));
    }
    let last = history.index_axis0(n - 1);
    Tensor::stack(&vec![last; m])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeadMetrics {
    pub lead: usize,
    pub mse: f64,
    /// `None` when the error is exactly zero; see `psnr_infinite`.
    pub psnr_db: Option<f64>,
    pub psnr_infinite: bool,
    pub ssim: f64,
    pub ets: f64,
    pub acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    pub psnr_db: Option<f64>,
    pub psnr_infinite: bool,
    pub ssim: f64,
    pub ets: f64,
    pub acc: f64,
    pub threshold: f64,
    pub per_lead: Vec<LeadMetrics>,
    pub n_windows: usize,
}

impl MetricsReport {
    pub fn psnr(&self) -> f64 {
        self.psnr_db.unwrap_or(f64::INFINITY)
    }
}

fn psnr_fields(mse: f64) -> (Option<f64>, bool) {
    let p = psnr_from_mse(mse, 1.0);
    if p.is_infinite() {
        (None, true)
    } else {
        (Some(p), false)
    }
}

#[derive(Default)]
struct Accumulator {
    sq_err: f64,
    count: usize,
    ssim: f64,
    ssim_count: usize,
    table: Option<ContingencyTable>,
}

impl Accumulator {
    fn add(&mut self, pred: &Tensor, truth: &Tensor, threshold: f64) -> Result<()> {
        self.sq_err += mse(pred, truth)? * pred.len() as f64;
        self.count += pred.len();
        self.ssim += ssim_2d(pred, truth)?;
        self.ssim_count += 1;
        let t = contingency(pred, truth, threshold)?;
        self.table = Some(self.table.map_or(t, |acc| acc.merge(&t)));
        Ok(())
    }

    fn finish(&self, lead: usize) -> LeadMetrics {
        let mse = self.sq_err / self.count.max(1) as f64;
        let (psnr_db, psnr_infinite) = psnr_fields(mse);
        let table = self.table.unwrap_or_default();
        LeadMetrics {
            lead,
            mse,
            psnr_db,
            psnr_infinite,
            ssim: self.ssim / self.ssim_count.max(1) as f64,
            ets: ets(&table),
            acc: acc(&table),
        }
    }
}

/// Scores `(prediction, truth)` pairs of `M x H x W` fields.
///
/// MSE is pooled over all pixels and PSNR derived from the pooled MSE; SSIM is
/// averaged over windows and frames; ETS and ACC come from the pooled table.
pub fn evaluate_pairs(pairs: &[(Tensor, Tensor)], threshold: f64) -> Result<MetricsReport> {
    let (first, _) = pairs.first().ok_or_else(|| Error::Config("no windows to evaluate; the test split is empty".into()))?;
    let [m, _, _] = first.shape()[..] else {
        return Err(Error::Dimension(format!("predictions must be M x H x W, got {:?}", first.shape())));
    };
    let mut leads: Vec<Accumulator> = (0..m).map(|_| Accumulator::default()).collect();
    let mut all = Accumulator::default();
    for (pred, truth) in pairs {
        pred.expect_same_shape(truth)?;
        pred.expect_same_shape(first)?;
        for (l, acc) in leads.iter_mut().enumerate() {
            let (p, t) = (pred.index_axis0(l), truth.index_axis0(l));
            acc.add(&p, &t, threshold)?;
            all.add(&p, &t, threshold)?;
        }
    }
    let overall = all.finish(0);
    Ok(MetricsReport {
        mse: overall.mse,
        psnr_db: overall.psnr_db,
        psnr_infinite: overall.psnr_infinite,
        ssim: overall.ssim,
        ets: overall.ets,
        acc: overall.acc,
        threshold,
        per_lead: leads.iter().enumerate().map(|(l, a)| a.finish(l + 1)).collect(),
        n_windows: pairs.len(),
    })
}

/// Scores the predictions in `pred_dir` against the test split of the dataset at `truth_dir`.
///
/// Prediction files share the dataset's window file names and hold `M x H x W` fields.
pub fn evaluate_run(pred_dir: &Path, truth_dir: &Path, threshold: f64) -> Result<MetricsReport> {
    let manifest = read_manifest(truth_dir)?;
    let missing: Vec<String> = manifest
        .split
        .test
        .iter()
        .map(|&i| pred_dir.join(window_file_name(i)))
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Evaluation(missing));
    }
    let mut pairs = Vec::with_capacity(manifest.split.test.len());
    for &i in &manifest.split.test {
        let pred = read_tensor_file(pred_dir.join(window_file_name(i)))?;
        let window = Window::from_tensor(&read_tensor_file(split_path(truth_dir, Split::Test, i))?, manifest.n)?;
        pairs.push((pred, window.future));
    }
    evaluate_pairs(&pairs, threshold)
}

pub fn write_metrics(path: &Path, report: &MetricsReport) -> Result<()> {
    write_json(path, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.gen_range(0.0..1.0))
    }

    #[test]
    fn mse_cases() {
        let a = random(&[8, 8], 1);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let b = a.map(|v| v + 0.1);
        assert!((mse(&b, &a).unwrap() - 0.01).abs() < 1e-12);
        let c = random(&[8, 8], 2);
        let mut oracle = 0.0;
        for i in 0..8 {
            for j in 0..8 {
                oracle += (a.get(&[i, j]) - c.get(&[i, j])).powi(2);
            }
        }
        assert!((mse(&a, &c).unwrap() - oracle / 64.0).abs() < 1e-12);
        assert!(mse(&a, &Tensor::zeros(&[4])).is_err());
    }

    #[test]
    fn psnr_cases() {
        assert_eq!(psnr_from_mse(0.01, 1.0), 20.0);
        assert!(psnr_from_mse(0.0, 1.0).is_infinite());
        assert!((psnr_from_mse(0.0048, 1.0) - 23.19).abs() < 0.05);
    }

    #[test]
    fn ssim_identical_and_inverted() {
        let a = random(&[16, 16], 3);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let board = Tensor::from_fn(&[16, 16], |i| ((i / 16 + i % 16) % 2) as f64);
        let inv = board.map(|v| 1.0 - v);
        assert!(ssim(&board, &inv).unwrap() < 0.0);
        assert!(ssim(&Tensor::zeros(&[8, 8]), &Tensor::zeros(&[8, 8])).is_err());
    }

    #[test]
    fn ssim_of_constants() {
        let (a, b) = (0.3, 0.7);
        let (c1, c2) = (1e-4, 9e-4);
        let expect = (2.0 * a * b + c1) * c2 / ((a * a + b * b + c1) * c2);
        let got = ssim(&Tensor::full(&[12, 12], a), &Tensor::full(&[12, 12], b)).unwrap();
        assert!((got - expect).abs() < 1e-9);
    }

    #[test]
    fn contingency_cases() {
        let a = random(&[16, 16], 4);
        let t = contingency(&a, &a, 0.5).unwrap();
        assert_eq!((t.false_alarms, t.misses), (0, 0));
        let k = a.data().iter().filter(|&&v| v >= 0.5).count() as u64;
        let z = contingency(&Tensor::zeros(&[16, 16]), &a, 0.5).unwrap();
        assert_eq!((z.misses, z.hits), (k, 0));
        assert!(contingency(&a, &a, 1.0).is_err());
    }

    #[test]
    fn ets_and_acc_cases() {
        let perfect = ContingencyTable { hits: 3, correct_negatives: 7, threshold: 0.5, ..Default::default() };
        assert_eq!(ets(&perfect), 1.0);
        assert_eq!(acc(&perfect), 1.0);
        let miss = ContingencyTable { misses: 10, correct_negatives: 90, threshold: 0.5, ..Default::default() };
        assert_eq!(ets(&miss), 0.0);
        let rare = ContingencyTable { misses: 1, correct_negatives: 99, threshold: 0.5, ..Default::default() };
        assert!((acc(&rare) - 0.99).abs() < 1e-12);
        assert_eq!(ets(&rare), 0.0);
    }

    #[test]
    fn persistence_cases() {
        let h = random(&[3, 4, 4], 5);
        let p = persistence_baseline(&h, 2).unwrap();
        assert_eq!(p.shape(), &[2, 4, 4]);
        assert_eq!(p.index_axis0(1), h.index_axis0(2));
        let still = Tensor::stack(&vec![h.index_axis0(0); 4]).unwrap();
        assert_eq!(mse(&persistence_baseline(&still, 4).unwrap(), &still).unwrap(), 0.0);
    }

    #[test]
    fn report_of_perfect_forecast() {
        let truth = Tensor::from_fn(&[3, 16, 16], |i| if i % 7 == 0 { 0.9 } else { 0.1 });
        let r = evaluate_pairs(&[(truth.clone(), truth.clone()), (truth.clone(), truth)], 0.5).unwrap();
        assert_eq!(r.mse, 0.0);
        assert!(r.psnr_infinite && r.psnr_db.is_none());
        assert!((r.ssim - 1.0).abs() < 1e-12);
        assert_eq!((r.ets, r.acc), (1.0, 1.0));
        assert_eq!(r.per_lead.iter().map(|l| l.lead).collect::<Vec<_>>(), vec![1, 2, 3]);
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["psnr_db"].is_null());
        assert_eq!(json["n_windows"], 2);
    }

    proptest! {
        #[test]
        fn symmetric_metrics(seed in any::<u64>()) {
            let a = random(&[12, 12], seed);
            let b = random(&[12, 12], seed ^ 0x5555);
            prop_assert_eq!(mse(&a, &b).unwrap(), mse(&b, &a).unwrap());
            prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn threshold_monotone(seed in any::<u64>(), lo in 0.05f64..0.5, gap in 0.0f64..0.45) {
            let a = random(&[12, 12], seed);
            let b = random(&[12, 12], seed.wrapping_add(1));
            let t1 = contingency(&a, &b, lo).unwrap();
            let t2 = contingency(&a, &b, lo + gap).unwrap();
            prop_assert!(t2.hits + t2.false_alarms <= t1.hits + t1.false_alarms);
            prop_assert!(ets(&t1) <= 1.0);
            let s = ssim(&a, &b).unwrap();
            prop_assert!((-1.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn ets_bounds_exhaustive() {
        for total in 1..=20u64 {
            for h in 0..=total {
                for mi in 0..=total - h {
                    for f in 0..=total - h - mi {
                        let t = ContingencyTable { hits: h, misses: mi, false_alarms: f, correct_negatives: total - h - mi - f, threshold: 0.5 };
                        let e = ets(&t);
                        assert!(e <= 1.0 + 1e-12);
                        let h_rand = ((h + mi) * (h + f)) as f64 / total as f64;
                        if (h as f64) <= h_rand {
                            assert!(e <= 1e-12);
                        }
                    }
                }
            }
        }
    }
}
