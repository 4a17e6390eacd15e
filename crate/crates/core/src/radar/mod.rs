//! Synthetic advected-storm radar fields, windowing, splits and on-disk formats.

pub mod dataset;
pub mod fgt;
mod generator;
mod window;

pub use dataset::{build_dataset, load_split, read_manifest, DataConfig, DatasetManifest, Split};
pub use fgt::{read_tensor_file, write_tensor_file};
pub use generator::{
    generate_indexed, generate_sequence, render_cells, sample_cells, CellPrior, GeneratorConfig, RadarSequence,
    StormCell,
};
pub use window::{extract_windows, split_dataset, window_count, DatasetSplit, SplitRatios, Window};
