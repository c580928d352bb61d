//! Trains a 16×16 model for a few hundred steps and prints the loss curve.
//! Re-running resumes from the last checkpoint in the same directory.
//!
//! ```text
//! cargo run --release --example train_quick -- [steps]
//! ```

mod support;

use customnet::experiment::{train_run, LOSS_FILE};

fn main() -> customnet::Result<()> {
    let steps: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let root = support::out_dir("train_quick");
    let mut cfg = support::quick_config(&root);
    cfg.train.steps = steps;
    cfg.train.pretrain_steps = steps / 4;
    cfg.train.checkpoint_every = 50;
    let dir = root.join(format!("run-{steps}"));
    std::fs::create_dir_all(&dir).map_err(|e| customnet::Error::io(&dir, e))?;
    std::fs::write(dir.join("config.toml"), toml::to_string(&cfg).expect("config serializes"))
        .map_err(|e| customnet::Error::io(&dir, e))?;

    let outcome = train_run(&cfg, &dir)?;
    let log = std::fs::read_to_string(dir.join(LOSS_FILE)).map_err(|e| customnet::Error::io(&dir, e))?;
    let losses: Vec<f64> = log.lines().skip(1).filter_map(|l| l.split(',').nth(1)?.parse().ok()).collect();
    let window = (losses.len() / 10).max(1);
    for (i, chunk) in losses.chunks(window).enumerate() {
        let mean = chunk.iter().sum::<f64>() / chunk.len() as f64;
        println!("steps {:>5}..{:<5} loss {mean:.4} {}", i * window + 1, i * window + chunk.len(), "#".repeat((mean * 60.0) as usize));
    }
    println!("{} steps, final loss {:.4}, checkpoint {}", outcome.steps, outcome.final_loss, outcome.checkpoint.display());
    Ok(())
}
