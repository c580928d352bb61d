use std::f64::consts::{PI, TAU};

use customnet::camera::{embed_pose, look_at_extrinsics, relative_pose, RelativePose, SphericalPose};
use proptest::prelude::*;

fn pose() -> impl Strategy<Value = SphericalPose> {
    (0.05..PI - 0.05, 0.0..TAU, 0.5..3.0f64).prop_map(|(t, p, r)| SphericalPose::new(t, p, r).unwrap())
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

proptest! {
    #[test]
    fn self_relative_pose_is_identity(p in pose()) {
        prop_assert_eq!(relative_pose(&p, &p), RelativePose::IDENTITY);
    }

    #[test]
    fn azimuth_changes_compose(a in pose(), b in pose(), c in pose()) {
        let ab = relative_pose(&a, &b).dphi();
        let bc = relative_pose(&b, &c).dphi();
        let ac = relative_pose(&a, &c).dphi();
        prop_assert!(angle_gap(ab + bc, ac) < 1e-9);
        let t = relative_pose(&a, &b).dtheta + relative_pose(&b, &c).dtheta;
        prop_assert!((t - relative_pose(&a, &c).dtheta).abs() < 1e-12);
    }

    #[test]
    fn embedding_stays_on_the_unit_circle(a in pose(), b in pose()) {
        let v = embed_pose(&relative_pose(&a, &b));
        prop_assert!((v[1] * v[1] + v[2] * v[2] - 1.0).abs() < 1e-12);
        prop_assert_eq!(RelativePose::from_embedding(v).unwrap(), relative_pose(&a, &b));
    }

    #[test]
    fn look_at_is_a_proper_rotation(p in pose()) {
        let e = look_at_extrinsics(&p);
        let r = e.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..3).map(|k| r[i][k] * r[j][k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((d - want).abs() < 1e-12);
            }
        }
        let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        prop_assert!((det - 1.0).abs() < 1e-12);
        // the camera sits at its own origin and sees the object straight ahead
        let cam = e.apply(p.center());
        prop_assert!(cam.iter().all(|v| v.abs() < 1e-12));
        let o = e.apply([0.0; 3]);
        prop_assert!(o[0].abs() < 1e-12 && o[1].abs() < 1e-12 && (o[2] + p.radius()).abs() < 1e-12);
    }

    #[test]
    fn relative_pose_serde_round_trip(dt in -3.0..3.0f64, dp in -10.0..10.0f64, dr in -2.0..2.0f64) {
        let r = RelativePose::from_deltas(dt, dp, dr);
        let back: RelativePose = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        prop_assert_eq!(back, r);
    }
}

#[test]
fn look_at_matches_gram_schmidt_oracle() {
    let (t, p, r) = (1.0f64, 1.0f64, 1.5f64);
    let c = [r * t.sin() * p.cos(), r * t.sin() * p.sin(), r * t.cos()];
    // camera +z points from the origin to the camera
    let z: Vec<f64> = c.iter().map(|v| v / r).collect();
    // world up with its component along z removed
    let dz = z[2];
    let y_raw = [-dz * z[0], -dz * z[1], 1.0 - dz * z[2]];
    let n = y_raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let y: Vec<f64> = y_raw.iter().map(|v| v / n).collect();
    let x = [y[1] * z[2] - y[2] * z[1], y[2] * z[0] - y[0] * z[2], y[0] * z[1] - y[1] * z[0]];
    let e = look_at_extrinsics(&SphericalPose::new(t, p, r).unwrap());
    for k in 0..3 {
        assert!((e.rotation[0][k] - x[k]).abs() < 1e-12, "x {:?} vs {x:?}", e.rotation[0]);
        assert!((e.rotation[1][k] - y[k]).abs() < 1e-12, "y {:?} vs {y:?}", e.rotation[1]);
        assert!((e.rotation[2][k] - z[k]).abs() < 1e-12, "z {:?} vs {z:?}", e.rotation[2]);
    }
}

#[test]
fn pole_uses_fallback_up() {
    let e = look_at_extrinsics(&SphericalPose::new(0.0, 0.0, 2.0).unwrap());
    assert!(e.rotation.iter().flatten().all(|v| v.is_finite()));
    let o = e.apply([0.0; 3]);
    assert!((o[2] + 2.0).abs() < 1e-12);
}

#[test]
fn out_of_range_poses_rejected() {
    assert!(SphericalPose::new(-0.1, 0.0, 1.0).is_err());
    assert!(SphericalPose::new(1.0, TAU, 1.0).is_err());
    assert!(SphericalPose::new(1.0, 0.0, 0.0).is_err());
    assert!(RelativePose::from_embedding([0.0, 0.5, 0.5, 0.0]).is_err());
}
