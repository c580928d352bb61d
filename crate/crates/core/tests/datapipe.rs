use customnet::camera::RelativePose;
use customnet::conditioning::place_object;
use customnet::datapipe::manifest::{generate_pair, record_rng};
use customnet::datapipe::natural::{build_natural_pair, generate_scene, IdentitySynthesizer, NaturalSource, SceneCaptioner};
use customnet::datapipe::pair::{draw_synthetic, synthetic_target};
use customnet::datapipe::{build_dataset, build_synthetic_pair, load_batches, BBox, DataConfig, DatasetKind, DatasetManifest, Provenance};
use customnet::world::{alpha_compose, render_background, RgbImage};
use customnet::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cfg() -> DataConfig {
    DataConfig::default()
}

#[test]
fn synthetic_pair_is_deterministic() {
    let a = build_synthetic_pair(&mut ChaCha8Rng::seed_from_u64(4), &cfg(), "x").unwrap();
    let b = build_synthetic_pair(&mut ChaCha8Rng::seed_from_u64(4), &cfg(), "x").unwrap();
    assert_eq!(a, b);
    a.validate().unwrap();
}

#[test]
fn bbox_invariants_over_many_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..10_000 {
        let aspect = 0.3 + (i % 50) as f64 * 0.05;
        let b = BBox::sample(&mut rng, aspect, 0.2, 0.8);
        BBox::with_min_side(b.x, b.y, b.w, b.h, 0.2).unwrap();
    }
}

#[test]
fn target_matches_recomputation() {
    let c = cfg();
    for seed in 0..6 {
        let pair = build_synthetic_pair(&mut record_rng(seed, 3), &c, "t").unwrap();
        let draw = draw_synthetic(&mut record_rng(seed, 3), &c).unwrap();
        assert_eq!(pair.target, synthetic_target(&draw, c.resolution).unwrap().quantized());
        // independent path: composite the placed reference-free target render
        let (fit, _) = customnet::world::fit_to_frame(
            &customnet::world::render_object(&draw.object, &draw.dst_pose, 32).unwrap(),
        );
        let manual = alpha_compose(
            &place_object(&fit, &draw.bbox, 32).unwrap(),
            &render_background(&draw.background, 32),
        )
        .unwrap();
        assert_eq!(pair.target, manual.quantized());
    }
}

#[test]
fn natural_bbox_is_tight_box_of_mask() {
    let mut mask = vec![false; 32 * 32];
    for y in 8..16 {
        for x in 4..12 {
            mask[y * 32 + x] = true;
        }
    }
    let image = RgbImage::filled(32, 32, [0.4, 0.5, 0.6]);
    let source = NaturalSource { image: image.clone(), mask, meta: None };
    let pair = build_natural_pair(&source, &mut ChaCha8Rng::seed_from_u64(0), &cfg(), &IdentitySynthesizer, &FixedCaption, "n").unwrap();
    assert_eq!(pair.bbox, BBox::new(0.125, 0.25, 0.25, 0.25).unwrap());
    assert_eq!(pair.rel_pose(), RelativePose::IDENTITY);
    assert_eq!(pair.reference, source.foreground());
    assert_eq!(pair.target.to_bytes(), image.to_bytes());
    assert_eq!(pair.provenance, Provenance::Natural);
}

struct FixedCaption;

impl customnet::datapipe::natural::Captioner for FixedCaption {
    fn caption(&self, _: &NaturalSource) -> customnet::Result<customnet::world::Caption> {
        customnet::world::Caption::from_text("a red cube on a solid background")
    }
}

#[test]
fn empty_mask_is_rejected() {
    let source = NaturalSource {
        image: RgbImage::zeros(32, 32),
        mask: vec![false; 32 * 32],
        meta: None,
    };
    let err = build_natural_pair(&source, &mut ChaCha8Rng::seed_from_u64(0), &cfg(), &IdentitySynthesizer, &FixedCaption, "n");
    assert!(matches!(err, Err(Error::InvalidInput { .. })));
}

#[test]
fn natural_target_is_source_bytes() {
    let c = cfg();
    for seed in 0..5 {
        let mut rng = record_rng(seed, 0);
        let source = generate_scene(&mut rng, &c).unwrap();
        let synth = customnet::datapipe::natural::RenderSynthesizer { config: c.clone() };
        let pair = build_natural_pair(&source, &mut rng, &c, &synth, &SceneCaptioner, "n").unwrap();
        assert_eq!(pair.target.to_bytes(), source.image.to_bytes());
        assert!(pair.background.is_none());
        assert_eq!(pair.bbox, BBox::from_mask(&source.mask, 32).unwrap());
        pair.validate().unwrap();
    }
}

#[test]
fn manifest_round_trip_and_digest_stability() {
    let tmp = tempfile::tempdir().unwrap();
    let c = cfg();
    let a = build_dataset(DatasetKind::Mixed, 12, 77, &c, &tmp.path().join("a")).unwrap();
    let b = build_dataset(DatasetKind::Mixed, 12, 77, &c, &tmp.path().join("b")).unwrap();
    assert_eq!(a.digest().unwrap(), b.digest().unwrap());
    assert_eq!(
        std::fs::read(tmp.path().join("a/manifest.jsonl")).unwrap(),
        std::fs::read(tmp.path().join("b/manifest.jsonl")).unwrap()
    );
    let reopened = DatasetManifest::open(&tmp.path().join("a")).unwrap();
    assert_eq!(reopened.records, a.records);
    reopened.verify().unwrap();
    for i in 0..12 {
        assert_eq!(reopened.load_pair(i).unwrap(), generate_pair(DatasetKind::Mixed, i, 77, &c).unwrap());
    }
    // refuses to overwrite
    assert!(build_dataset(DatasetKind::Mixed, 12, 77, &c, &tmp.path().join("a")).is_err());
    assert!(!tmp.path().join("a.partial").exists());
}

#[test]
fn single_record_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let m = build_dataset(DatasetKind::Synthetic, 1, 3, &cfg(), &tmp.path().join("d")).unwrap();
    assert_eq!(m.len(), 1);
    assert_eq!(m.header.n, 1);
    assert_eq!(m.digest().unwrap().len(), 64);
    assert!(build_dataset(DatasetKind::Synthetic, 0, 3, &cfg(), &tmp.path().join("e")).is_err());
}

#[test]
fn mixed_ratio_over_three_hundred() {
    let tmp = tempfile::tempdir().unwrap();
    let m = build_dataset(DatasetKind::Mixed, 300, 5, &cfg(), &tmp.path().join("m")).unwrap();
    let syn = m.records.iter().filter(|r| r.provenance == Provenance::Synthetic).count();
    assert_eq!(syn, 100);
    assert_eq!(m.len() - syn, 200);
}

#[test]
fn batches_and_corruption() {
    let tmp = tempfile::tempdir().unwrap();
    let m = build_dataset(DatasetKind::Synthetic, 10, 8, &cfg(), &tmp.path().join("d")).unwrap();
    let sizes: Vec<usize> = load_batches(&m, 4, 1).unwrap().map(|b| b.unwrap().len()).collect();
    assert_eq!(sizes, vec![4, 4, 2]);
    let ids = |seed| -> Vec<String> {
        load_batches(&m, 10, seed).unwrap().flat_map(|b| b.unwrap()).map(|p| p.id).collect()
    };
    assert_eq!(ids(5), ids(5));
    assert_eq!(load_batches(&m, 10, 5).unwrap().count(), 1);

    let victim = &m.records[3];
    let path = m.dir.join(&victim.tgt_path);
    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 20;
    bytes[last] ^= 0xff;
    std::fs::write(&path, bytes).unwrap();
    let err = load_batches(&m, 10, 5).unwrap().next().unwrap().unwrap_err();
    match err {
        Error::CorruptDataset { record, .. } => assert_eq!(record, victim.id),
        other => panic!("unexpected {other}"),
    }
}
