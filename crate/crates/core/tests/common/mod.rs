#![allow(dead_code)]

pub mod gradcheck;
pub mod oracle;
pub mod sanity;

use customnet::config::RunConfig;
use customnet::datapipe::{build_synthetic_pair, DataConfig, TrainingPair};
use customnet::diffusion::{ModelConfig, UNetConfig};
use customnet::encoders::EncoderConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const RES: usize = 16;

/// A small model that trains in milliseconds per step.
pub fn tiny_model() -> ModelConfig {
    ModelConfig {
        resolution: RES,
        unet: UNetConfig {
            widths: vec![16, 32],
            attn_levels: 1,
            groups: 8,
            ..UNetConfig::default()
        },
        encoders: EncoderConfig {
            embed_dim: 16,
            object_widths: vec![8, 16],
            text_max_len: 8,
        },
        ..ModelConfig::default()
    }
}

pub fn tiny_data() -> DataConfig {
    DataConfig {
        resolution: RES,
        ..DataConfig::default()
    }
}

pub fn pairs(n: usize, seed: u64) -> Vec<TrainingPair> {
    let cfg = tiny_data();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| build_synthetic_pair(&mut rng, &cfg, format!("p{i}")).unwrap())
        .collect()
}

/// Whole-pipeline settings small enough for a test: tiny model, a few
/// pairs, a handful of steps.
pub fn tiny_run_config(root: &std::path::Path) -> RunConfig {
    let mut c = RunConfig::default();
    c.data.pipeline = tiny_data();
    c.data.root = root.join("data");
    c.data.train_size = 6;
    c.data.pretrain_size = 6;
    c.model = tiny_model();
    c.train.steps = 4;
    c.train.pretrain_steps = 2;
    c.train.batch_size = 3;
    c.train.checkpoint_every = 2;
    c.eval.conditions = 3;
    c.eval.sampler.steps = 3;
    c.eval.chunk = 4;
    c.probe.steps = 5;
    c.probe.gate_samples = 8;
    c.probe.batch_size = 8;
    c.service.max_steps = 20;
    c
}
