#![allow(dead_code)]

use std::path::{Path, PathBuf};

use customnet::config::RunConfig;
use customnet::datapipe::DataConfig;
use customnet::diffusion::{ModelConfig, UNetConfig};
use customnet::encoders::EncoderConfig;
use customnet::experiment::{read_run_config, train_run, CHECKPOINT_FILE};

/// Where examples write their images.
pub fn out_dir(name: &str) -> PathBuf {
    let dir = PathBuf::from("target/examples-out").join(name);
    std::fs::create_dir_all(&dir).expect("create output directory");
    dir
}

/// A 16×16 configuration that trains in a few seconds.
pub fn quick_config(root: &Path) -> RunConfig {
    let mut c = RunConfig::default();
    c.data.pipeline = DataConfig { resolution: 16, ..DataConfig::default() };
    c.data.root = root.join("data");
    c.data.train_size = 64;
    c.data.pretrain_size = 64;
    c.model = ModelConfig {
        resolution: 16,
        unet: UNetConfig { widths: vec![16, 32], attn_levels: 1, groups: 8, ..UNetConfig::default() },
        encoders: EncoderConfig { embed_dim: 16, object_widths: vec![8, 16], text_max_len: 8 },
        ..ModelConfig::default()
    };
    c.train.steps = 60;
    c.train.pretrain_steps = 20;
    c.train.batch_size = 8;
    c.train.checkpoint_every = 20;
    c.eval.conditions = 8;
    c.eval.sampler.steps = 10;
    c.probe.steps = 40;
    c.probe.gate_samples = 64;
    c
}

/// The run directory named on the command line, or a quick run trained
/// on the spot.
pub fn run_dir_or_train(arg: Option<String>) -> customnet::Result<(RunConfig, PathBuf)> {
    if let Some(dir) = arg {
        let dir = PathBuf::from(dir);
        return Ok((read_run_config(&dir)?, dir));
    }
    let root = out_dir("quick-run");
    let cfg = quick_config(&root);
    let dir = root.join("run");
    std::fs::create_dir_all(&dir).map_err(|e| customnet::Error::io(&dir, e))?;
    std::fs::write(dir.join("config.toml"), toml::to_string(&cfg).expect("config serializes"))
        .map_err(|e| customnet::Error::io(&dir, e))?;
    if !dir.join(CHECKPOINT_FILE).exists() {
        println!("no run directory given; training a quick 16x16 model in {}", dir.display());
    }
    train_run(&cfg, &dir)?;
    Ok((cfg, dir))
}
