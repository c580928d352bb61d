//! Generates one object under a sweep of viewpoint changes and a sweep of
//! bounding boxes.
//!
//! ```text
//! cargo run --release --example sample_views -- [run-dir] [object-id]
//! ```

mod support;

use std::f64::consts::TAU;

use customnet::experiment::CHECKPOINT_FILE;
use customnet::service::{AppState, SampleRequest, WireBBox};
use customnet::world::RgbImage;

fn paste_row(sheet: &mut RgbImage, row: usize, images: &[RgbImage]) {
    for (c, img) in images.iter().enumerate() {
        let res = img.width();
        for y in 0..res {
            for x in 0..res {
                sheet.pixel_mut(c * res + x, row * res + y).copy_from_slice(img.pixel(x, y));
            }
        }
    }
}

fn main() -> customnet::Result<()> {
    let mut args = std::env::args().skip(1);
    let (cfg, dir) = support::run_dir_or_train(args.next())?;
    let object = args.next().unwrap_or_else(|| "red-cube".into());
    let state = AppState::load(cfg, &dir.join(CHECKPOINT_FILE))?;
    let request = |dphi: f64, bbox: WireBBox| SampleRequest {
        object_id: Some(object.clone()),
        reference: None,
        rel_pose: [0.0, dphi, 0.0],
        bbox,
        prompt: Some("a red cube on a solid background".into()),
        background: None,
        steps: Some(20),
        guidance: None,
        seed: 5,
    };
    let centered = WireBBox { x: 0.2, y: 0.2, w: 0.6, h: 0.6 };

    let views: Vec<RgbImage> = (0..6)
        .map(|i| state.generate(&request(TAU * i as f64 / 6.0, centered)))
        .collect::<customnet::Result<_>>()?;
    let boxes = [
        WireBBox { x: 0.0, y: 0.0, w: 0.5, h: 0.5 },
        WireBBox { x: 0.5, y: 0.0, w: 0.5, h: 0.5 },
        WireBBox { x: 0.25, y: 0.25, w: 0.5, h: 0.5 },
        WireBBox { x: 0.0, y: 0.5, w: 0.5, h: 0.5 },
        WireBBox { x: 0.5, y: 0.5, w: 0.5, h: 0.5 },
        WireBBox { x: 0.1, y: 0.3, w: 0.8, h: 0.4 },
    ];
    let placed: Vec<RgbImage> = boxes
        .iter()
        .map(|b| state.generate(&request(0.0, *b)))
        .collect::<customnet::Result<_>>()?;

    let res = views[0].width();
    let mut sheet = RgbImage::zeros(res * 6, res * 2);
    paste_row(&mut sheet, 0, &views);
    paste_row(&mut sheet, 1, &placed);
    let path = support::out_dir("sample_views").join(format!("{object}.png"));
    sheet.save_png(&path)?;
    println!("top: azimuth 0..300 degrees; bottom: six boxes. {}", path.display());
    Ok(())
}
