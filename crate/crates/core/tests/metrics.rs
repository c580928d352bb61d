use customnet::datapipe::BBox;
use customnet::error::Result;
use customnet::eval::metrics::{mask_bbox, open_mask, outside_dilated, COMPOSITION_DILATION};
use customnet::eval::report::{aggregate_rows, rows_from_csv};
use customnet::eval::{
    background_text_score, composition_fidelity, identity_score, location_iou, view_fidelity, BackgroundProbe,
    ImageEncoder, MetricsReport, MetricsRow, UniformProbe,
};
use customnet::world::{Family, RgbImage, RgbaImage};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Embeds an image as its mean color.
struct MeanColor;

impl ImageEncoder for MeanColor {
    fn embed(&self, image: &RgbImage) -> Result<Vec<f64>> {
        Ok(image.mean().iter().map(|&v| v as f64).collect())
    }
}

fn random_image(res: usize, rng: &mut ChaCha8Rng) -> RgbImage {
    RgbImage::from_data(res, res, (0..res * res * 3).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

fn paste(bg: &RgbImage, bbox: &BBox, color: [f32; 3]) -> RgbImage {
    let mut out = bg.clone();
    let (x0, y0, x1, y1) = bbox.pixel_rect(bg.width());
    for y in y0..y1 {
        for x in x0..x1 {
            out.pixel_mut(x, y).copy_from_slice(&color);
        }
    }
    out
}

#[test]
fn identity_of_matching_and_orthogonal_crops() {
    let bbox = BBox::new(0.25, 0.25, 0.5, 0.5).unwrap();
    let bg = RgbImage::filled(32, 32, [0.0, 0.0, 1.0]);
    let red = RgbaImage::opaque(&RgbImage::filled(32, 32, [1.0, 0.0, 0.0]));
    let gen = paste(&bg, &bbox, [1.0, 0.0, 0.0]);
    let same = identity_score(&MeanColor, &gen, &bbox, &red).unwrap();
    assert!((same - 1.0).abs() < 1e-6, "{same}");
    let green = RgbaImage::opaque(&RgbImage::filled(32, 32, [0.0, 1.0, 0.0]));
    assert!(identity_score(&MeanColor, &gen, &bbox, &green).unwrap().abs() < 1e-6);
}

#[test]
fn view_fidelity_swaps_with_its_arguments() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let bbox = BBox::new(0.1, 0.2, 0.6, 0.5).unwrap();
    let (g, t, s) = (random_image(32, &mut rng), random_image(32, &mut rng), random_image(32, &mut rng));
    let (a, b) = view_fidelity(&g, &bbox, &t, &s).unwrap();
    assert_eq!(view_fidelity(&g, &bbox, &s, &t).unwrap(), (b, a));
    assert_eq!(view_fidelity(&t, &bbox, &t, &s).unwrap().0, 0.0);
    assert!(view_fidelity(&g, &bbox, &RgbImage::zeros(16, 16), &s).is_err());
}

#[test]
fn view_fidelity_of_independent_uniform_images() {
    // E (a - b)^2 = 1/6 for independent U(0, 1)
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let bbox = BBox::FULL;
    let n = 40;
    let mean = (0..n)
        .map(|_| view_fidelity(&random_image(32, &mut rng), &bbox, &random_image(32, &mut rng), &random_image(32, &mut rng)).unwrap().0)
        .sum::<f64>()
        / n as f64;
    assert!((mean - 1.0 / 6.0).abs() < 0.003, "{mean}");

    // against flat references with 0/1 channels, E (u - c)^2 = 1/3
    let mean = (0..n)
        .map(|_| {
            let c = [0, 1, 2].map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 });
            let flat = RgbImage::filled(32, 32, c);
            view_fidelity(&random_image(32, &mut rng), &bbox, &flat, &flat).unwrap().0
        })
        .sum::<f64>()
        / n as f64;
    assert!((mean - 1.0 / 3.0).abs() < 0.003, "{mean}");
}

#[test]
fn location_iou_cases() {
    let bg = RgbImage::filled(32, 32, [0.2, 0.2, 0.2]);
    let req = BBox::new(0.25, 0.25, 0.5, 0.5).unwrap();
    let exact = location_iou(&paste(&bg, &req, [0.9, 0.1, 0.1]), &bg, &req, 0.1, 1).unwrap();
    assert!((exact.iou - 1.0).abs() < 1e-12 && !exact.empty);

    let far = BBox::new(0.75, 0.75, 0.25, 0.25).unwrap();
    let disjoint = location_iou(&paste(&bg, &far, [0.9, 0.1, 0.1]), &bg, &req, 0.1, 1).unwrap();
    assert_eq!(disjoint.iou, 0.0);

    // the left half of the request: intersection 1/8, union 1/4
    let half = BBox::new(0.25, 0.25, 0.25, 0.5).unwrap();
    let h = location_iou(&paste(&bg, &half, [0.9, 0.1, 0.1]), &bg, &req, 0.1, 1).unwrap();
    assert!((h.iou - 0.5).abs() < 1e-12, "{}", h.iou);

    let none = location_iou(&bg, &bg, &req, 0.1, 1).unwrap();
    assert!(none.empty && none.iou == 0.0);
}

#[test]
fn speckle_is_not_foreground() {
    let bg = RgbImage::filled(32, 32, [0.2, 0.2, 0.2]);
    let mut g = bg.clone();
    g.pixel_mut(3, 3).copy_from_slice(&[1.0, 1.0, 1.0]);
    assert!(location_iou(&g, &bg, &BBox::FULL, 0.1, 1).unwrap().empty);
}

#[test]
fn uniform_probe_scores_a_quarter() {
    let img = RgbImage::filled(32, 32, [0.5; 3]);
    for f in Family::ALL {
        assert_eq!(background_text_score(&UniformProbe, &img, &BBox::FULL, Some(f)).unwrap(), 0.25);
    }
    assert_eq!(background_text_score(&UniformProbe, &img, &BBox::FULL, None).unwrap(), 0.0);
}

#[test]
fn background_probe_sees_no_bbox_content() {
    struct Spy;
    impl BackgroundProbe for Spy {
        fn family_probs(&self, image: &RgbImage) -> Result<[f64; 4]> {
            let red = image.data().chunks(3).any(|p| p[0] == 1.0);
            Ok(if red { [1.0, 0.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0, 0.0] })
        }
    }
    let bbox = BBox::new(0.25, 0.25, 0.5, 0.5).unwrap();
    let g = paste(&RgbImage::filled(32, 32, [0.2; 3]), &bbox, [1.0, 0.0, 0.0]);
    assert_eq!(background_text_score(&Spy, &g, &bbox, Some(Family::Gradient)).unwrap(), 1.0);
    assert!(mask_bbox(&g, &bbox).data().chunks(3).all(|p| p == [0.2; 3]));
}

#[test]
fn composition_fidelity_cases() {
    let bbox = BBox::new(0.25, 0.25, 0.5, 0.5).unwrap();
    let bg = RgbImage::filled(32, 32, [0.3, 0.4, 0.5]);
    let inside_only = paste(&bg, &bbox, [1.0, 1.0, 1.0]);
    assert_eq!(composition_fidelity(&inside_only, &bg, &bbox).unwrap(), 0.0);
    let shifted = RgbImage::filled(32, 32, [0.4, 0.5, 0.6]);
    let mse = composition_fidelity(&shifted, &bg, &bbox).unwrap();
    assert!((mse - 0.01).abs() < 1e-6, "{mse}");
}

#[test]
fn dilated_complement_oracle() {
    let bbox = BBox::new(0.25, 0.25, 0.5, 0.5).unwrap();
    assert_eq!(COMPOSITION_DILATION, 2);
    let keep = outside_dilated(&bbox, 32, COMPOSITION_DILATION);
    for y in 0..32 {
        for x in 0..32 {
            let inner = (6..26).contains(&x) && (6..26).contains(&y);
            assert_eq!(keep[y * 32 + x], !inner);
        }
    }
    assert_eq!(keep.iter().filter(|&&k| k).count(), 624);
}

proptest! {
    #[test]
    fn opening_never_grows_the_mask(bits in proptest::collection::vec(any::<bool>(), 256)) {
        let o = open_mask(&bits, 16, 1);
        prop_assert!(o.iter().zip(&bits).all(|(a, b)| !*a || *b));
        prop_assert_eq!(open_mask(&o, 16, 1), o);
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in (0.0..0.5f64, 0.0..0.5f64, 0.1..0.5f64, 0.1..0.5f64),
                                    b in (0.0..0.5f64, 0.0..0.5f64, 0.1..0.5f64, 0.1..0.5f64)) {
        let a = BBox::new(a.0, a.1, a.2, a.3).unwrap();
        let b = BBox::new(b.0, b.1, b.2, b.3).unwrap();
        let (ab, ba) = (a.iou(&b), b.iou(&a));
        prop_assert!((ab - ba).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((a.iou(&a) - 1.0).abs() < 1e-12);
    }
}

fn row(i: usize, rng: &mut ChaCha8Rng) -> MetricsRow {
    MetricsRow {
        id: format!("c{i}"),
        azimuth_distance: rng.random_range(0.0..std::f64::consts::PI),
        identity: rng.random_range(-1.0..1.0),
        cross_identity: rng.random_range(-1.0..1.0),
        view_fidelity_target: rng.random_range(0.0..0.2),
        view_fidelity_source: rng.random_range(0.0..0.2),
        location_iou: rng.random_range(0.0..1.0),
        location_empty: rng.random_bool(0.2),
        background_score: rng.random_range(0.0..1.0),
        composition_mse: rng.random_range(0.0..0.1),
    }
}

#[test]
fn report_round_trips_through_csv() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<MetricsRow> = (0..25).map(|i| row(i, &mut rng)).collect();
    let report = MetricsReport::from_rows(rows.clone(), "abc".into(), 1.0).unwrap();
    let back = rows_from_csv(&report.to_csv()).unwrap();
    assert_eq!(back, rows);
    assert_eq!(aggregate_rows(&back, 1.0), report.aggregates);
    let mean = rows.iter().map(|r| r.identity).sum::<f64>() / 25.0;
    assert!((report.mean("identity") - mean).abs() < 1e-12);
    let large: Vec<f64> = rows.iter().filter(|r| r.azimuth_distance >= 1.0).map(|r| r.view_fidelity_target).collect();
    assert_eq!(report.aggregates["view_fidelity_target_large"].n, large.len());
    assert_eq!(report.digest(), MetricsReport::from_rows(rows, "abc".into(), 1.0).unwrap().digest());
}

#[test]
fn report_rejects_empty_and_non_finite() {
    assert!(MetricsReport::from_rows(vec![], "x".into(), 1.0).is_err());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut r = row(0, &mut rng);
    r.identity = f64::NAN;
    assert!(MetricsReport::from_rows(vec![r], "x".into(), 1.0).is_err());
}

#[test]
fn summary_carries_reference_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let report = MetricsReport::from_rows(vec![row(0, &mut rng)], "d".into(), 1.0).unwrap();
    let v: serde_json::Value = serde_json::from_str(&report.summary_json().unwrap()).unwrap();
    assert_eq!(v["reference_regime"]["dino_i"], 0.7742);
    assert_eq!(v["reference_regime"]["clip_i"], 0.8164);
    assert_eq!(v["reference_regime"]["clip_t"], 0.2258);
    assert_eq!(v["metrics"]["identity"]["n"], 1);
}
