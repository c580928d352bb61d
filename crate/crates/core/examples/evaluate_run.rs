//! Scores a trained run on held-out conditions and prints the headline
//! aggregates next to the large-scale reference numbers.
//!
//! ```text
//! cargo run --release --example evaluate_run -- [run-dir]
//! ```

mod support;

use customnet::experiment::{create_run_dir, eval_run, CHECKPOINT_FILE};

fn main() -> customnet::Result<()> {
    let (cfg, dir) = support::run_dir_or_train(std::env::args().nth(1))?;
    let out = create_run_dir(&dir, "eval", &cfg)?;
    let report = eval_run(&cfg, &dir.join(CHECKPOINT_FILE), &out)?;
    for key in [
        "identity",
        "identity_margin",
        "view_fidelity_target_large",
        "view_fidelity_source_large",
        "location_iou",
        "background_score",
        "composition_mse",
    ] {
        let a = &report.aggregates[key];
        println!("{key:>28}: {:.4} ± {:.4} (n = {})", a.mean, a.std, a.n);
    }
    let r = &report.reference_regime;
    println!("reference regime: DINO-I {}, CLIP-I {}, CLIP-T {} ({})", r.dino_i, r.clip_i, r.clip_t, r.note);
    println!("probe gate {:.3}; report in {}", report.probe_gate, out.display());
    Ok(())
}
