//! Relative viewpoint changes, their conditioning vector and the look-at
//! camera behind each render.

use customnet::camera::{embed_pose, look_at_extrinsics, relative_pose, SphericalPose};

fn main() -> customnet::Result<()> {
    let src = SphericalPose::new(1.2, 0.3, 1.75)?;
    for (theta, phi, radius) in [(1.2, 0.3, 1.75), (1.0, 1.9, 1.75), (1.4, 6.0, 2.1), (0.6, 3.4, 1.5)] {
        let dst = SphericalPose::new(theta, phi, radius)?;
        let rel = relative_pose(&src, &dst);
        let v = embed_pose(&rel);
        println!(
            "to ({theta:.2}, {phi:.2}, {radius:.2}): dphi {:.3} rad, |dphi| {:.3}, vector [{:.3}, {:.3}, {:.3}, {:.3}]",
            rel.dphi(),
            rel.azimuth_distance(),
            v[0],
            v[1],
            v[2],
            v[3]
        );
    }

    let cam = look_at_extrinsics(&src);
    println!("camera center {:?}", src.center().map(|c| (c * 1e3).round() / 1e3));
    for (name, row) in ["right", "up", "back"].iter().zip(cam.rotation) {
        println!("  {name:>5} {:?}", row.map(|c| (c * 1e3).round() / 1e3));
    }
    println!("origin in camera frame {:?}", cam.apply([0.0; 3]).map(|c| (c * 1e3).round() / 1e3));
    Ok(())
}
