use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::RadarSequence;
use crate::error::{Error, Result};
use crate::numeric::Tensor;
use crate::rng::{self, domain};

/// `N` history frames followed by `M` future frames.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub start: usize,
    pub history: Tensor,
    pub future: Tensor,
}

impl Window {
    /// History and future stacked into one `(N+M) x H x W` tensor.
    pub fn to_tensor(&self) -> Tensor {
        let [n, h, w] = self.history.shape()[..] else { unreachable!() };
        let m = self.future.shape()[0];
        let mut data = self.history.data().to_vec();
        data.extend_from_slice(self.future.data());
        Tensor::new(vec![n + m, h, w], data).expect("window extents")
    }

    pub fn from_tensor(t: &Tensor, n: usize) -> Result<Self> {
        let [f, h, w] = t.shape()[..] else {
            return Err(Error::Dimension(format!("window tensor must be rank 3, got {:?}", t.shape())));
        };
        if n == 0 || n >= f {
            return Err(Error::Dimension(format!("cannot split {f} frames into {n} history frames plus a future")));
        }
        let split = n * h * w;
        Ok(Self {
            start: 0,
            history: Tensor::new(vec![n, h, w], t.data()[..split].to_vec())?,
            future: Tensor::new(vec![f - n, h, w], t.data()[split..].to_vec())?,
        })
    }
}

pub fn window_count(frames: usize, n: usize, m: usize, stride: usize) -> usize {
    if n + m > frames || stride == 0 {
        0
    } else {
        (frames - n - m) / stride + 1
    }
}

/// Sliding windows in temporal order.
pub fn extract_windows(seq: &RadarSequence, n: usize, m: usize, stride: usize) -> Result<Vec<Window>> {
    if n == 0 || m == 0 || stride == 0 {
        return Err(Error::Config(format!("N, M and stride must be positive (got {n}, {m}, {stride})")));
    }
    let frames = seq.n_frames();
    if n + m > frames {
        return Err(Error::Config(format!(
            "insufficient frames: {frames} frames cannot hold N+M = {} steps",
            n + m
        )));
    }
    let plane = seq.height() * seq.width();
    let (h, w) = (seq.height(), seq.width());
    let data = seq.frames.data();
    let windows = (0..window_count(frames, n, m, stride))
        .map(|k| {
            let s = k * stride;
            Window {
                start: s,
                history: Tensor::new(vec![n, h, w], data[s * plane..(s + n) * plane].to_vec()).unwrap(),
                future: Tensor::new(vec![m, h, w], data[(s + n) * plane..(s + n + m) * plane].to_vec()).unwrap(),
            }
        })
        .collect();
    Ok(windows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.64, val: 0.16, test: 0.20 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffled disjoint split. Validation and test sizes are `floor(n * ratio)`;
/// the remainder goes to training.
pub fn split_dataset(n_windows: usize, ratios: SplitRatios, seed: u64) -> Result<DatasetSplit> {
    if n_windows < 3 {
        return Err(Error::Config(format!("need at least 3 windows to split, got {n_windows}")));
    }
    let SplitRatios { train, val, test } = ratios;
    if [train, val, test].iter().any(|r| !(0.0..=1.0).contains(r)) || ((train + val + test) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios {train}/{val}/{test} must be in [0,1] and sum to 1")));
    }
    let n_val = (n_windows as f64 * val + 1e-9).floor() as usize;
    let n_test = (n_windows as f64 * test + 1e-9).floor() as usize;
    let mut order: Vec<usize> = (0..n_windows).collect();
    order.shuffle(&mut rng::stream(seed, domain::SPLIT, n_windows as u64, 0));
    let n_train = n_windows - n_val - n_test;
    let mut split = DatasetSplit {
        train: order[..n_train].to_vec(),
        val: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
    };
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(frames: usize) -> RadarSequence {
        RadarSequence {
            frames: Tensor::from_fn(&[frames, 2, 2], |i| (i / 4) as f64),
            frame_interval_minutes: 6.0,
        }
    }

    #[test]
    fn window_counts() {
        assert_eq!(extract_windows(&seq(10), 5, 5, 10).unwrap().len(), 1);
        let w = extract_windows(&seq(20), 5, 5, 10).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[1].history.get(&[0, 0, 0]), 10.0);
        let w = extract_windows(&seq(12), 5, 5, 1).unwrap();
        assert_eq!(w.iter().map(|w| w.start).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn history_precedes_future() {
        for w in extract_windows(&seq(23), 4, 3, 2).unwrap() {
            assert_eq!(w.history.get(&[3, 1, 1]) + 1.0, w.future.get(&[0, 1, 1]));
        }
    }

    #[test]
    fn insufficient_frames() {
        let err = extract_windows(&seq(8), 5, 5, 10).unwrap_err();
        assert!(err.to_string().contains("insufficient frames"));
    }

    #[test]
    fn window_tensor_round_trip() {
        let w = &extract_windows(&seq(12), 5, 5, 1).unwrap()[2];
        let back = Window::from_tensor(&w.to_tensor(), 5).unwrap();
        assert_eq!(back.history, w.history);
        assert_eq!(back.future, w.future);
    }

    #[test]
    fn split_sizes() {
        let s = split_dataset(10_000, SplitRatios::default(), 0).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (6400, 1600, 2000));
        let s = split_dataset(10, SplitRatios::default(), 0).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (7, 1, 2));
    }

    #[test]
    fn split_is_disjoint_and_deterministic() {
        let a = split_dataset(97, SplitRatios::default(), 5).unwrap();
        assert_eq!(a, split_dataset(97, SplitRatios::default(), 5).unwrap());
        assert_ne!(a, split_dataset(97, SplitRatios::default(), 6).unwrap());
        let mut all: Vec<_> = a.train.iter().chain(&a.val).chain(&a.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..97).collect::<Vec<_>>());
    }

    #[test]
    fn split_errors() {
        assert!(split_dataset(2, SplitRatios::default(), 0).is_err());
        let bad = SplitRatios { train: 0.5, val: 0.5, test: 0.5 };
        assert!(split_dataset(10, bad, 0).is_err());
    }
}
