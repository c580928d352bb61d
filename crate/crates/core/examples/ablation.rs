//! Trains and evaluates every ablation arm on the quick 16×16 setting and
//! prints a comparison table.
//!
//! ```text
//! cargo run --release --example ablation -- [steps]
//! ```

mod support;

use customnet::experiment::{run_arm, Arm};

fn main() -> customnet::Result<()> {
    let steps: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let root = support::out_dir("ablation").join(format!("steps-{steps}"));
    let mut cfg = support::quick_config(&root);
    cfg.train.steps = steps;
    cfg.train.pretrain_steps = steps / 4;
    cfg.train.checkpoint_every = 100;

    let keys = ["identity", "view_fidelity_target_large", "location_iou", "background_score", "composition_mse"];
    println!("{:>20} {}", "arm", keys.map(|k| format!("{k:>27}")).join(""));
    for arm in Arm::ALL {
        let report = run_arm(&cfg, arm, &root)?;
        let cells = keys.map(|k| format!("{:>27.4}", report.mean(k))).join("");
        println!("{:>20} {cells}", arm.name());
    }
    Ok(())
}
