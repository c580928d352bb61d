//! Noise schedule, conditional denoiser, training and sampling.

pub mod checkpoint;
pub mod model;
pub mod sample;
pub mod schedule;
pub mod train;
pub mod unet;

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use model::{encode_conditions, init_params, CustomNet, DenoiserBatch, EpsilonModel, ModelConfig};
pub use sample::{ddim_sample, ddim_step, ddim_timesteps, guided_eps, sample, sample_batch, GuidedDenoiser, ModelDenoiser, SamplerConfig};
pub use schedule::{make_schedule, q_sample, q_sample_with, NoiseSchedule, ScheduleConfig};
pub use train::{prepare_batch, training_loss, TrainConfig, Trainer};
pub use unet::{AttentionMode, UNetConfig};
