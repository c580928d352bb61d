mod common;

use customnet::camera::{embed_pose, RelativePose};
use customnet::conditioning::{
    assemble_unet_input, condition_dropout, fuse_object_pose, fusion_pose_jacobian, place_object, ConditionBundle,
    UNET_IN_CHANNELS,
};
use customnet::datapipe::BBox;
use customnet::diffusion::{encode_conditions, init_params};
use customnet::encoders::{encode_object, encode_text};
use customnet::world::{Caption, RgbImage, RgbaImage};
use customnet_autograd::{Graph, Session, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn opaque_reference(res: usize) -> RgbaImage {
    let mut img = RgbaImage::zeros(res, res);
    for y in 0..res {
        for x in 0..res {
            img.pixel_mut(x, y)
                .copy_from_slice(&[x as f32 / res as f32, y as f32 / res as f32, 0.5, 1.0]);
        }
    }
    img
}

fn bundle(bbox: BBox, pose: RelativePose, caption: &str, bg: Option<RgbImage>) -> ConditionBundle {
    let reference = common::pairs(1, 3)[0].reference.clone();
    ConditionBundle::new(reference, &pose, bbox, Caption::from_text(caption).unwrap(), bg, common::RES).unwrap()
}

#[test]
fn full_box_placement_is_the_resized_reference() {
    let r = opaque_reference(32);
    assert_eq!(place_object(&r, &BBox::FULL, 32).unwrap(), r.resize_bilinear(32, 32));
}

#[test]
fn quarter_box_occupies_eight_to_twenty_four() {
    let r = opaque_reference(32);
    let c = place_object(&r, &BBox::new(0.25, 0.25, 0.5, 0.5).unwrap(), 32).unwrap();
    for y in 0..32 {
        for x in 0..32 {
            let inside = (8..24).contains(&x) && (8..24).contains(&y);
            assert_eq!(c.alpha(x, y) == 1.0, inside, "({x}, {y})");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn placement_fills_exactly_the_pixel_rect(x in 0.0..0.6f64, y in 0.0..0.6f64, w in 0.2..0.4f64, h in 0.2..0.4f64) {
        let bbox = BBox::new(x, y, w, h).unwrap();
        let r = opaque_reference(32);
        let c = place_object(&r, &bbox, 32).unwrap();
        let (x0, y0, x1, y1) = bbox.pixel_rect(32);
        for py in 0..32 {
            for px in 0..32 {
                let inside = (x0..x1).contains(&px) && (y0..y1).contains(&py);
                if inside {
                    prop_assert_eq!(c.alpha(px, py), 1.0);
                } else {
                    prop_assert!(c.pixel(px, py).iter().all(|&v| v == 0.0));
                }
            }
        }
        // re-placing the canvas over the whole frame leaves it unchanged
        prop_assert_eq!(place_object(&c, &BBox::FULL, 32).unwrap(), c);
    }

    #[test]
    fn layout_keeps_inputs_in_disjoint_channels(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let res = common::RES;
        let bg = RgbImage::from_data(res, res, (0..res * res * 3).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let z = Tensor::<f64>::randn(vec![res, res, 3], 1.0, &mut rng);
        let pose = RelativePose::from_deltas(0.1, 1.0, 0.0);
        let bbox = BBox::new(0.1, 0.2, 0.5, 0.6).unwrap();
        let gen = bundle(bbox, pose, "a red cube on a checker background", None);
        let comp = bundle(bbox, pose, "", Some(bg.clone()));
        let xg = assemble_unet_input(&z, &gen).unwrap();
        let xc = assemble_unet_input(&z, &comp).unwrap();
        prop_assert_eq!(xg.shape(), &[res, res, UNET_IN_CHANNELS]);
        for p in 0..res * res {
            let (g, c) = (&xg.data()[p * 10..p * 10 + 10], &xc.data()[p * 10..p * 10 + 10]);
            prop_assert_eq!(&g[0..3], &z.data()[p * 3..p * 3 + 3]);
            let placed = gen.placed.pixel(p % res, p / res);
            prop_assert!(g[3..7].iter().zip(placed).all(|(a, &b)| *a == b as f64));
            prop_assert!(g[7..10].iter().all(|&v| v == 0.0));
            let bpx = bg.pixel(p % res, p / res);
            prop_assert!(c[7..10].iter().zip(bpx).all(|(a, &b)| *a == b as f64));
            prop_assert_eq!(&g[0..7], &c[0..7]);
        }
    }
}

#[test]
fn dropout_extremes_and_rate() {
    let b = bundle(BBox::FULL, RelativePose::IDENTITY, "a red cube on a solid background", None);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        assert_eq!(condition_dropout(b.clone(), &mut rng, 0.0, 0.0).unwrap(), b);
        let d = condition_dropout(b.clone(), &mut rng, 1.0, 0.0).unwrap();
        assert!(d.text_is_null() && !d.drop_object);
    }
    let n = 100_000;
    let dropped = (0..n)
        .filter(|_| condition_dropout(b.clone(), &mut rng, 0.1, 0.0).unwrap().drop_text)
        .count();
    let rate = dropped as f64 / n as f64;
    println!("text drop rate {rate}");
    assert!((rate - 0.1).abs() < 0.005);
    assert!(condition_dropout(b, &mut rng, 1.5, 0.0).is_err());
}

#[test]
fn fusion_is_deterministic_and_jacobian_matches_differences() {
    let cfg = common::tiny_model();
    let params = init_params(&cfg, 5).unwrap().cast::<f64>();
    let d = cfg.encoders.embed_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let emb: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
    for pose in [[0.0, 0.0, 1.0, 0.0], [0.4, 0.7, -0.714, 0.2], [-1.0, -1.0, 0.0, -0.3]] {
        let out = fuse_object_pose(&params, &emb, pose);
        assert_eq!(out.len(), d);
        assert_eq!(out, fuse_object_pose(&params, &emb, pose));
        let jac = fusion_pose_jacobian(&params, &emb, pose);
        let h = 1e-5;
        for k in 0..4 {
            let (mut p, mut m) = (pose, pose);
            p[k] += h;
            m[k] -= h;
            let (fp, fm) = (fuse_object_pose(&params, &emb, p), fuse_object_pose(&params, &emb, m));
            for o in 0..d {
                let num = (fp[o] - fm[o]) / (2.0 * h);
                let a = jac[o][k];
                let err = (a - num).abs() / a.abs().max(num.abs()).max(1e-6);
                assert!(err < 1e-4, "output {o}, pose {k}: {a} vs {num}");
            }
        }
    }
}

#[test]
fn object_embeddings_are_unit_norm_and_deterministic() {
    let cfg = common::tiny_model();
    let params = init_params(&cfg, 6).unwrap();
    for pair in common::pairs(5, 7) {
        let e = encode_object(&params, &cfg.encoders, &pair.reference, common::RES).unwrap();
        assert_eq!(e.0.len(), cfg.encoders.embed_dim);
        let norm: f64 = e.0.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-5, "norm {norm}");
        assert_eq!(e, encode_object(&params, &cfg.encoders, &pair.reference, common::RES).unwrap());
    }
    assert!(encode_object(&params, &cfg.encoders, &RgbaImage::zeros(8, 8), common::RES).is_err());
}

#[test]
fn object_token_ignores_placement() {
    let cfg = common::tiny_model();
    let params = init_params(&cfg, 7).unwrap();
    let pose = RelativePose::from_deltas(0.2, 0.5, 0.0);
    let a = bundle(BBox::new(0.0, 0.0, 0.3, 0.3).unwrap(), pose, "a red cube on a solid background", None);
    let b = bundle(BBox::new(0.5, 0.4, 0.5, 0.6).unwrap(), pose, "a red cube on a solid background", None);
    let g = Graph::new();
    let s = Session::infer(&g, &params);
    let tok = encode_conditions(&s, &cfg, &[&a, &b]).unwrap().object.value();
    let d = cfg.encoders.embed_dim;
    assert_eq!(tok.data()[..d], tok.data()[d..]);
}

#[test]
fn text_masks_and_positions() {
    let cfg = common::tiny_model();
    let params = init_params(&cfg, 8).unwrap();
    let empty = encode_text(&params, &cfg.encoders, &Caption::empty()).unwrap();
    assert!(empty.mask.iter().all(|v| !v));
    assert!(empty.matrix.data().iter().all(|&v| v == 0.0));
    let one = encode_text(&params, &cfg.encoders, &Caption::from_text("red").unwrap()).unwrap();
    assert_eq!(one.mask.iter().filter(|v| **v).count(), 1);
    let ab = encode_text(&params, &cfg.encoders, &Caption::from_text("red cube").unwrap()).unwrap();
    let ba = encode_text(&params, &cfg.encoders, &Caption::from_text("cube red").unwrap()).unwrap();
    assert_ne!(ab.matrix, ba.matrix);
    // token "red" at position 0 vs position 1 differs through the position table
    let d = cfg.encoders.embed_dim;
    assert_ne!(ab.matrix.data()[..d], ba.matrix.data()[d..2 * d]);
}

#[test]
fn pose_embedding_reaches_the_object_token() {
    let cfg = common::tiny_model();
    let params = init_params(&cfg, 9).unwrap();
    let bbox = BBox::new(0.2, 0.2, 0.5, 0.5).unwrap();
    let a = bundle(bbox, RelativePose::from_deltas(0.0, 0.3, 0.0), "", None);
    let b = bundle(bbox, RelativePose::from_deltas(0.0, 2.3, 0.0), "", None);
    assert_eq!(a.pose, embed_pose(&RelativePose::from_deltas(0.0, 0.3, 0.0)));
    let g = Graph::new();
    let s = Session::infer(&g, &params);
    let tok = encode_conditions(&s, &cfg, &[&a, &b]).unwrap().object.value();
    let d = cfg.encoders.embed_dim;
    assert_ne!(tok.data()[..d], tok.data()[d..]);

    let mut no_pose = cfg.clone();
    no_pose.use_pose = false;
    let g = Graph::new();
    let s = Session::infer(&g, &params);
    let tok = encode_conditions(&s, &no_pose, &[&a, &b]).unwrap().object.value();
    assert_eq!(tok.data()[..d], tok.data()[d..]);
}
