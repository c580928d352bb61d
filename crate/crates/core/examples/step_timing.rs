//! Times training steps and sampling on freshly generated pairs.

use std::time::Instant;

use customnet::datapipe::{build_synthetic_pair, DataConfig};
use customnet::diffusion::{sample, ModelConfig, SamplerConfig, ScheduleConfig, TrainConfig, Trainer};
use customnet::conditioning::{Branch, ConditionBundle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> customnet::Result<()> {
    let batch: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(32);
    let data = DataConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let pairs: Vec<_> = (0..batch)
        .map(|i| build_synthetic_pair(&mut rng, &data, format!("{i}")))
        .collect::<customnet::Result<_>>()?;
    let refs: Vec<_> = pairs.iter().collect();
    let cfg = TrainConfig { batch_size: batch, ..TrainConfig::default() };
    let mut trainer = Trainer::new(ModelConfig::default(), ScheduleConfig::default(), cfg, String::new())?;
    println!("params: {}", trainer.params.numel());
    for i in 0..5 {
        let t = Instant::now();
        let loss = trainer.train_step(&refs)?;
        println!("step {i}: loss {loss:.4} in {:.3}s", t.elapsed().as_secs_f64());
    }
    let bundle = ConditionBundle::from_pair(&pairs[0], Branch::Generation)?;
    let t = Instant::now();
    let sc = SamplerConfig { steps: 10, ..SamplerConfig::default() };
    sample(&trainer.model, &trainer.ema, &trainer.schedule, &bundle, 0, &sc)?;
    println!("10-step guided sample in {:.3}s", t.elapsed().as_secs_f64());
    Ok(())
}
