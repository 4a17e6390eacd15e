//! Noise schedule, samplers, training and the full-field forecast operator.

mod nowcast;
mod sampler;
mod schedule;
mod train;

pub use nowcast::{nowcast, nowcast_tiles, sample_patch, NowcastConfig};
pub use sampler::{ddim_timesteps, sample_ddim, sample_ddpm, standard_normal, SamplerConfig, SamplerKind};
pub use schedule::{build_schedule, forward_noise, NoiseSchedule, ScheduleConfig};
pub use train::{
    evaluation_loss, load_checkpoint, save_checkpoint, train, training_loss, validation_samples, AdamW,
    CheckpointMeta, PatchDataset, PatchedWindow, TrainConfig, TrainState, TrainingSample,
};
