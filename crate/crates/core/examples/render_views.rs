//! Renders one object from a ring of azimuths and writes the strip.
//!
//! ```text
//! cargo run --example render_views -- [shape] [res]
//! ```

mod support;

use std::f64::consts::TAU;

use customnet::camera::SphericalPose;
use customnet::datapipe::fitted_render;
use customnet::world::{alpha_compose, Color, PrimitiveObject, RgbImage, Shape};

fn main() -> customnet::Result<()> {
    let mut args = std::env::args().skip(1);
    let shape = match args.next().as_deref() {
        None | Some("cube") => Shape::Cube,
        Some(name) => *Shape::ALL
            .iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| customnet::Error::invalid("shape", format!("unknown shape {name:?}")))?,
    };
    let res: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(64);
    let object = PrimitiveObject::new(shape, Color::Red.rgb(), 0.45, 3)?;
    let backdrop = RgbImage::filled(res, res, [0.92, 0.92, 0.92]);

    let views = 8;
    let mut strip = RgbImage::zeros(res * views, res);
    for i in 0..views {
        let phi = TAU * i as f64 / views as f64;
        let pose = SphericalPose::new(1.1, phi, 1.75)?;
        let (rgba, scale) = fitted_render(&object, &pose, res)?;
        let view = alpha_compose(&rgba, &backdrop)?;
        for y in 0..res {
            for x in 0..res {
                strip.pixel_mut(i * res + x, y).copy_from_slice(view.pixel(x, y));
            }
        }
        println!("phi {phi:.2}: fit scale {scale:.3}, marker quadrant {}", object.marker_quadrant());
    }
    let path = support::out_dir("render_views").join(format!("{}.png", shape.name()));
    strip.save_png(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}
