//! Builds a small mixed dataset (synthetic and natural-pipeline pairs),
//! verifies it, and writes a contact sheet of the first pairs.
//!
//! ```text
//! cargo run --example build_dataset -- [n] [seed]
//! ```

mod support;

use customnet::datapipe::{build_dataset, DataConfig, DatasetKind, DatasetManifest, Provenance};
use customnet::world::{alpha_compose, RgbImage};

fn main() -> customnet::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(24);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = DataConfig::default();
    let out = support::out_dir("build_dataset").join(format!("mixed-{n}-s{seed}"));
    let _ = std::fs::remove_dir_all(&out);
    let built = build_dataset(DatasetKind::Mixed, n, seed, &cfg, &out)?;

    let manifest = DatasetManifest::open(&out)?;
    manifest.verify()?;
    println!("{} records, digest {}", manifest.len(), built.digest()?);

    let pairs = manifest.load_all()?;
    let natural = pairs.iter().filter(|p| p.provenance != Provenance::Synthetic).count();
    println!("synthetic {}, natural pipeline {natural}", pairs.len() - natural);

    let res = cfg.resolution;
    let rows = pairs.len().min(6);
    let mut sheet = RgbImage::filled(res * 3, res * rows, [1.0, 1.0, 1.0]);
    let grey = RgbImage::filled(res, res, [0.5, 0.5, 0.5]);
    for (r, p) in pairs.iter().take(rows).enumerate() {
        let reference = alpha_compose(&p.reference, &grey)?;
        let bg = p.background.clone().unwrap_or_else(|| grey.clone());
        for (c, img) in [&reference, &p.target, &bg].into_iter().enumerate() {
            for y in 0..res {
                for x in 0..res {
                    sheet.pixel_mut(c * res + x, r * res + y).copy_from_slice(img.pixel(x, y));
                }
            }
        }
        println!(
            "{}: {:?}, rel pose dphi {:.2}, bbox [{:.2}, {:.2}, {:.2}, {:.2}], caption {:?}",
            p.id,
            p.provenance,
            p.rel_pose().dphi(),
            p.bbox.x,
            p.bbox.y,
            p.bbox.w,
            p.bbox.h,
            p.caption.text()
        );
    }
    let path = out.with_extension("png");
    sheet.save_png(&path)?;
    println!("reference | target | background sheet: {}", path.display());
    Ok(())
}
