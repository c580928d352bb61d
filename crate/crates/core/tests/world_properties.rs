use customnet::camera::SphericalPose;
use customnet::world::{
    alpha_compose, render_background, render_object, BackgroundSpec, Caption, Color, Family,
    PrimitiveObject, RgbImage, RgbaImage, Shape, WorldRanges,
};
use customnet::world::caption::{caption_text, detokenize, tokenize};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn centroid(img: &RgbaImage) -> (f64, f64, f64) {
    let (mut m, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for y in 0..img.height() {
        for x in 0..img.width() {
            let a = img.alpha(x, y) as f64;
            m += a;
            cx += a * (x as f64 + 0.5);
            cy += a * (y as f64 + 0.5);
        }
    }
    (cx / m, cy / m, m)
}

#[test]
fn every_shape_is_centered() {
    let ranges = WorldRanges::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for shape in Shape::ALL {
        for _ in 0..60 {
            let mut obj = ranges.sample_object(&mut rng);
            obj.shape = shape;
            obj.scale = ranges.scale_max;
            let pose = ranges.sample_pose(&mut rng);
            let img = render_object(&obj, &pose, 32).unwrap();
            let (cx, cy, _) = centroid(&img);
            let d = ((cx - 16.0).powi(2) + (cy - 16.0).powi(2)).sqrt();

            worst = worst.max(d);
            assert!(d <= 2.0, "{shape:?} at {pose:?}: centroid off by {d}");
        }
    }
    eprintln!("worst centroid offset {worst:.3} px");
}

#[test]
fn renders_fit_in_frame_at_min_radius() {
    let ranges = WorldRanges::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for shape in Shape::ALL {
        for _ in 0..40 {
            let mut obj = ranges.sample_object(&mut rng);
            obj.shape = shape;
            obj.scale = ranges.scale_max;
            let p = ranges.sample_pose(&mut rng);
            let pose = SphericalPose::new(p.theta(), p.phi(), ranges.radius_min).unwrap();
            let img = render_object(&obj, &pose, 32).unwrap();
            for i in 0..32 {
                for edge in [(i, 0), (i, 31), (0, i), (31, i)] {
                    assert_eq!(img.alpha(edge.0, edge.1), 0.0, "{shape:?} touches border");
                }
            }
        }
    }
}

#[test]
fn cube_shrinks_with_distance() {
    let obj = PrimitiveObject::new(Shape::Cube, [0.5, 0.5, 0.5], 0.45, 1).unwrap();
    let mut last = f64::INFINITY;
    for k in 0..8 {
        let r = 1.5 + 0.1 * k as f64;
        let (_, _, mass) = centroid(&render_object(&obj, &SphericalPose::new(1.0, 0.7, r).unwrap(), 32).unwrap());
        assert!(mass < last, "radius {r}: {mass} !< {last}");
        last = mass;
    }
}

#[test]
fn cube_side_view_matches_analytic_square() {
    // side 2s seen at magnification focal·res/r pixels per unit
    for (s, r) in [(0.5, 1.6), (0.4, 1.6), (0.5, 2.0)] {
        let obj = PrimitiveObject::new(Shape::Cube, [0.3, 0.6, 0.9], s, 2).unwrap();
        let img = render_object(&obj, &SphericalPose::new(PI / 2.0, 0.0, r).unwrap(), 32).unwrap();
        let side = 2.0 * s * 0.8 * 32.0 / r;
        let lo = 16.0 - side / 2.0;
        let hi = 16.0 + side / 2.0;
        for y in 0..32 {
            for x in 0..32 {
                let cover = |p: usize| ((p as f64 + 1.0).min(hi) - (p as f64).max(lo)).max(0.0);
                let expect = cover(x) * cover(y);
                // 4×4 supersampling quantizes coverage to sixteenths
                assert!((img.alpha(x, y) as f64 - expect).abs() <= 0.25 + 1e-9, "s={s} r={r} ({x},{y})");
            }
        }
    }
}

#[test]
fn gradient_rows_interpolate() {
    let c0 = [0.1f32, 0.9, 0.3];
    let c1 = [0.7f32, 0.2, 0.5];
    let spec = BackgroundSpec::new(Family::Gradient, vec![c0, c1], None, 0).unwrap();
    let img = render_background(&spec, 32);
    for y in 0..32 {
        let t = y as f64 / 31.0;
        for x in [0, 17, 31] {
            for c in 0..3 {
                let expect = c0[c] as f64 + t * (c1[c] as f64 - c0[c] as f64);
                assert!((img.pixel(x, y)[c] as f64 - expect).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn solid_fills_every_pixel() {
    let img = render_background(&BackgroundSpec::solid([0.2, 0.4, 0.6]), 16);
    assert!(img.data().chunks(3).all(|p| p == [0.2, 0.4, 0.6]));
}

#[test]
fn every_template_caption_round_trips() {
    for color in Color::ALL {
        for shape in Shape::ALL {
            for family in Family::ALL {
                let text = caption_text(color, shape, family);
                let tokens = tokenize(&text).unwrap();
                assert_eq!(detokenize(&tokens).unwrap(), text);
                let cap = Caption::from_text(&text).unwrap();
                assert_eq!(cap.family(), Some(family));
            }
        }
    }
}

#[test]
fn compose_extremes() {
    let bg = RgbImage::filled(4, 4, [0.3, 0.2, 0.1]);
    assert_eq!(alpha_compose(&RgbaImage::zeros(4, 4), &bg).unwrap(), bg);
    let mut fg = RgbaImage::zeros(4, 4);
    for p in fg.data_mut().chunks_mut(4) {
        p.copy_from_slice(&[0.9, 0.8, 0.7, 1.0]);
    }
    assert_eq!(alpha_compose(&fg, &bg).unwrap(), fg.to_rgb());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn renders_are_premultiplied_and_deterministic(seed in any::<u64>()) {
        let ranges = WorldRanges::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obj = ranges.sample_object(&mut rng);
        let pose = ranges.sample_pose(&mut rng);
        let a = render_object(&obj, &pose, 24).unwrap();
        prop_assert!(a.is_premultiplied_clean());
        prop_assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let b = render_object(&obj, &pose, 24).unwrap();
        prop_assert_eq!(a.data(), b.data());
    }

    #[test]
    fn random_backgrounds_stay_in_range(seed in any::<u64>(), fam in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = BackgroundSpec::random(Family::ALL[fam], &mut rng);
        let img = render_background(&spec, 32);
        prop_assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
