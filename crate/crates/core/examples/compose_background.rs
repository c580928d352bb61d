//! Places an object into a user-supplied background (the composition
//! branch) and scores how well the background outside the box survives.
//!
//! ```text
//! cargo run --release --example compose_background -- [run-dir]
//! ```

mod support;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use customnet::datapipe::BBox;
use customnet::eval::composition_fidelity;
use customnet::experiment::CHECKPOINT_FILE;
use customnet::service::{AppState, SampleRequest, WireBBox};
use customnet::world::{render_background, BackgroundSpec, Family};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> customnet::Result<()> {
    let (cfg, dir) = support::run_dir_or_train(std::env::args().nth(1))?;
    let res = cfg.data.pipeline.resolution;
    let state = AppState::load(cfg, &dir.join(CHECKPOINT_FILE))?;
    let out = support::out_dir("compose_background");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for family in Family::ALL {
        let bg = render_background(&BackgroundSpec::random(family, &mut rng), res);
        let bbox = WireBBox { x: 0.3, y: 0.35, w: 0.45, h: 0.5 };
        let req = SampleRequest {
            object_id: Some("blue-sphere".into()),
            reference: None,
            rel_pose: [0.1, 0.6, 0.0],
            bbox,
            prompt: None,
            background: Some(B64.encode(bg.png_bytes()?)),
            steps: Some(20),
            guidance: None,
            seed: 1,
        };
        let img = state.generate(&req)?;
        let mse = composition_fidelity(&img, &bg.quantized(), &BBox::new(bbox.x, bbox.y, bbox.w, bbox.h)?)?;
        let path = out.join(format!("{}.png", family.name()));
        img.save_png(&path)?;
        bg.save_png(&out.join(format!("{}-background.png", family.name())))?;
        println!("{:>8}: mse outside box {mse:.5} -> {}", family.name(), path.display());
    }
    Ok(())
}
