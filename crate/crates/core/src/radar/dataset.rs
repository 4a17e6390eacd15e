use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::fgt::{read_tensor_file, write_tensor_file};
use super::generator::{generate_indexed, GeneratorConfig};
use super::window::{extract_windows, split_dataset, DatasetSplit, SplitRatios, Window};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub seed: u64,
    pub n_sequences: usize,
    pub generator: GeneratorConfig,
    pub channels: usize,
    pub n: usize,
    pub m: usize,
    pub stride: usize,
    pub split: SplitRatios,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_sequences: 60,
            generator: GeneratorConfig::default(),
            channels: 1,
            n: 5,
            m: 5,
            stride: 10,
            split: SplitRatios::default(),
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n + self.m > self.generator.frames {
            return Err(Error::Config(format!(
                "insufficient frames: {} frames cannot hold N+M = {}",
                self.generator.frames,
                self.n + self.m
            )));
        }
        self.generator.validate()?;
        if self.channels != 1 {
            return Err(Error::Config(format!("only single-channel fields are supported, got {}", self.channels)));
        }
        if self.n_sequences == 0 {
            return Err(Error::Config("n_sequences must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: DataConfig,
    pub height: usize,
    pub width: usize,
    pub n: usize,
    pub m: usize,
    pub stride: usize,
    pub frame_interval_minutes: f64,
    pub n_windows: usize,
    pub split: DatasetSplit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

pub fn window_file_name(index: usize) -> String {
    format!("window_{index:06}.fgt")
}

/// All windows of the configured dataset, in sequence-major order.
pub fn generate_windows(cfg: &DataConfig) -> Result<Vec<Window>> {
    cfg.validate()?;
    let mut all = Vec::new();
    for s in 0..cfg.n_sequences {
        let seq = generate_indexed(cfg.seed, s as u64, &cfg.generator)?;
        all.extend(extract_windows(&seq, cfg.n, cfg.m, cfg.stride)?);
    }
    Ok(all)
}

/// Generates, splits and writes a dataset under `root`.
pub fn build_dataset(cfg: &DataConfig, root: &Path) -> Result<DatasetManifest> {
    let windows = generate_windows(cfg)?;
    let split = split_dataset(windows.len(), cfg.split, cfg.seed)?;
    for (which, ids) in [(Split::Train, &split.train), (Split::Val, &split.val), (Split::Test, &split.test)] {
        let dir = root.join(which.dir_name());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for &i in ids {
            write_tensor_file(dir.join(window_file_name(i)), &windows[i].to_tensor())?;
        }
    }
    let manifest = DatasetManifest {
        config: cfg.clone(),
        height: cfg.generator.height,
        width: cfg.generator.width,
        n: cfg.n,
        m: cfg.m,
        stride: cfg.stride,
        frame_interval_minutes: cfg.generator.frame_interval_minutes,
        n_windows: windows.len(),
        split,
    };
    write_json(&root.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(root: &Path) -> Result<DatasetManifest> {
    read_json(&root.join("manifest.json"))
}

/// Loads every window of one split, paired with its global index.
pub fn load_split(root: &Path, manifest: &DatasetManifest, which: Split) -> Result<Vec<(usize, Window)>> {
    let ids = match which {
        Split::Train => &manifest.split.train,
        Split::Val => &manifest.split.val,
        Split::Test => &manifest.split.test,
    };
    ids.iter()
        .map(|&i| {
            let t = read_tensor_file(split_path(root, which, i))?;
            Ok((i, Window::from_tensor(&t, manifest.n)?))
        })
        .collect()
}

pub fn split_path(root: &Path, which: Split, index: usize) -> PathBuf {
    root.join(which.dir_name()).join(window_file_name(index))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DataConfig {
        DataConfig {
            n_sequences: 3,
            generator: GeneratorConfig { frames: 20, height: 32, width: 32, n_cells: 3, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn builds_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let m = build_dataset(&small(), dir.path()).unwrap();
        assert_eq!(m.n_windows, 6);
        let again = read_manifest(dir.path()).unwrap();
        assert_eq!(again, m);
        let test = load_split(dir.path(), &m, Split::Test).unwrap();
        assert_eq!(test.len(), m.split.test.len());
        let all = generate_windows(&small()).unwrap();
        for (i, w) in test {
            assert_eq!(w.history, all[i].history);
            assert_eq!(w.future, all[i].future);
        }
    }

    #[test]
    fn stride_n_plus_m_windows_are_disjoint() {
        let cfg = small();
        let seq = generate_indexed(cfg.seed, 0, &cfg.generator).unwrap();
        let w = extract_windows(&seq, 5, 5, 10).unwrap();
        assert_eq!(w.len(), 20 / 10);
        let mut frames: Vec<usize> = w.iter().flat_map(|w| w.start..w.start + 10).collect();
        let before = frames.len();
        frames.dedup();
        assert_eq!(frames.len(), before);
    }

    #[test]
    fn rejects_multi_channel() {
        let cfg = DataConfig { channels: 3, ..small() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
