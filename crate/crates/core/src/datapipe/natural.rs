//! The reverse pipeline: an unblended scene image is the target and the
//! reference is a novel view of its extracted foreground.
//!
//! Segmentation, captioning and novel-view synthesis sit behind traits.
//! The procedural implementations read the scene metadata that a
//! procedurally generated "natural" image carries.

use rand::Rng;

use super::pair::{fitted_render, DataConfig, Provenance, SceneInfo, TrainingPair};
use super::BBox;
use crate::camera::SphericalPose;
use crate::conditioning::place_object;
use crate::error::{Error, Result};
use crate::world::{caption_of, render_background, BackgroundSpec, Caption, Family, RgbImage, RgbaImage};

/// Ground truth of a procedurally generated scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneMeta {
    pub info: SceneInfo,
    pub pose: SphericalPose,
    /// Where the object was placed.
    pub bbox: BBox,
}

/// An image with a foreground mask, as a segmenter would deliver it.
#[derive(Clone, Debug, PartialEq)]
pub struct NaturalSource {
    pub image: RgbImage,
    /// Row-major foreground mask.
    pub mask: Vec<bool>,
    pub meta: Option<SceneMeta>,
}

impl NaturalSource {
    /// The masked foreground as a premultiplied RGBA image.
    pub fn foreground(&self) -> RgbaImage {
        let (w, h) = (self.image.width(), self.image.height());
        let data = self
            .image
            .data()
            .chunks(3)
            .zip(&self.mask)
            .flat_map(|(p, &m)| if m { [p[0], p[1], p[2], 1.0] } else { [0.0; 4] })
            .collect();
        RgbaImage::from_data(w, h, data).expect("sizes match")
    }
}

pub trait Segmenter {
    fn segment(&self, image: &RgbImage, meta: Option<&SceneMeta>) -> Result<Vec<bool>>;
}

pub trait Captioner {
    fn caption(&self, source: &NaturalSource) -> Result<Caption>;
}

/// Sampled viewpoint change for the reference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViewDelta {
    pub dtheta: f64,
    pub dphi: f64,
    pub dradius: f64,
}

pub trait NovelViewSynthesizer {
    /// Returns the reference image and the pose it was taken from. The
    /// target's own pose is returned by [`NovelViewSynthesizer::source_pose`].
    fn synthesize(&self, source: &NaturalSource, delta: ViewDelta) -> Result<(RgbaImage, SphericalPose)>;

    fn source_pose(&self, source: &NaturalSource) -> SphericalPose;
}

/// Pose assigned to scenes without metadata.
pub fn default_pose() -> SphericalPose {
    SphericalPose::new(std::f64::consts::FRAC_PI_2, 0.0, 1.75).expect("valid")
}

/// Returns the masked foreground unchanged, seen from the source pose.
pub struct IdentitySynthesizer;

impl NovelViewSynthesizer for IdentitySynthesizer {
    fn synthesize(&self, source: &NaturalSource, _delta: ViewDelta) -> Result<(RgbaImage, SphericalPose)> {
        Ok((source.foreground(), self.source_pose(source)))
    }

    fn source_pose(&self, source: &NaturalSource) -> SphericalPose {
        source.meta.as_ref().map_or_else(default_pose, |m| m.pose)
    }
}

/// Re-renders the scene object from the offset viewpoint.
pub struct RenderSynthesizer {
    pub config: DataConfig,
}

impl NovelViewSynthesizer for RenderSynthesizer {
    fn synthesize(&self, source: &NaturalSource, d: ViewDelta) -> Result<(RgbaImage, SphericalPose)> {
        let meta = source
            .meta
            .as_ref()
            .ok_or_else(|| Error::invalid("source", "render synthesis needs scene metadata"))?;
        let w = &self.config.world;
        let pose = meta.pose.offset(d.dtheta, d.dphi, d.dradius, w.theta_min, w.radius_min);
        let (img, _) = fitted_render(&meta.info.object, &pose, source.image.width())?;
        Ok((img.quantized(), pose))
    }

    fn source_pose(&self, source: &NaturalSource) -> SphericalPose {
        source.meta.as_ref().map_or_else(default_pose, |m| m.pose)
    }
}

/// Recovers the mask from scene metadata by re-rendering the placement and
/// keeping pixels with at least half coverage.
pub struct SceneSegmenter;

impl Segmenter for SceneSegmenter {
    fn segment(&self, image: &RgbImage, meta: Option<&SceneMeta>) -> Result<Vec<bool>> {
        let meta = meta.ok_or_else(|| Error::invalid("source", "scene segmenter needs metadata"))?;
        let res = image.width();
        let (fit, _) = fitted_render(&meta.info.object, &meta.pose, res)?;
        let placed = place_object(&fit, &meta.bbox, res)?;
        Ok((0..res * res).map(|i| placed.alpha(i % res, i / res) >= 0.5).collect())
    }
}

/// Captions from scene metadata.
pub struct SceneCaptioner;

impl Captioner for SceneCaptioner {
    fn caption(&self, source: &NaturalSource) -> Result<Caption> {
        let meta = source
            .meta
            .as_ref()
            .ok_or_else(|| Error::invalid("source", "scene captioner needs metadata"))?;
        Ok(caption_of(&meta.info.object, meta.info.background.family()))
    }
}

/// Generates a "natural" scene: an object placed at a random box over a
/// background, with its color pulled towards the ambient background color
/// and a soft drop shadow. These images are never used as blended
/// references; they only ever serve as targets.
pub fn generate_scene<R: Rng + ?Sized>(rng: &mut R, cfg: &DataConfig) -> Result<NaturalSource> {
    let res = cfg.resolution;
    let object = cfg.world.sample_object(rng);
    let pose = cfg.world.sample_pose(rng);
    let (fit, aspect) = fitted_render(&object, &pose, res)?;
    let bbox = BBox::sample(rng, aspect, cfg.bbox_min_side, cfg.bbox_max_side);
    let family = Family::ALL[rng.random_range(0..Family::ALL.len())];
    let spec = BackgroundSpec::random(family, rng);
    let bg = render_background(&spec, res);
    let placed = place_object(&fit, &bbox, res)?;

    let mean = bg.mean();
    let shadow = drop_shadow(&placed, 1, 1);
    let mut image = RgbImage::zeros(res, res);
    for y in 0..res {
        for x in 0..res {
            let f = placed.pixel(x, y);
            let a = f[3];
            let b = bg.pixel(x, y);
            let dark = 1.0 - cfg.natural.shadow * shadow[y * res + x];
            let out = image.pixel_mut(x, y);
            for c in 0..3 {
                let obj = (1.0 - cfg.natural.tint) * f[c] + cfg.natural.tint * mean[c] * a;
                out[c] = (obj + (1.0 - a) * b[c] * dark).clamp(0.0, 1.0);
            }
        }
    }
    let meta = SceneMeta {
        info: SceneInfo {
            object,
            background: spec,
        },
        pose,
        bbox,
    };
    let image = image.quantized();
    let mask = SceneSegmenter.segment(&image, Some(&meta))?;
    if !mask.iter().any(|&m| m) {
        return Err(Error::invalid("mask", "scene object covers no pixel"));
    }
    Ok(NaturalSource {
        image,
        mask,
        meta: Some(meta),
    })
}

/// Alpha shifted by `(dx, dy)` and box-blurred with radius 1.
fn drop_shadow(placed: &RgbaImage, dx: usize, dy: usize) -> Vec<f32> {
    let res = placed.width();
    let mut shifted = vec![0.0f32; res * res];
    for y in dy..res {
        for x in dx..res {
            shifted[y * res + x] = placed.alpha(x - dx, y - dy);
        }
    }
    let mut out = vec![0.0f32; res * res];
    for y in 0..res {
        for x in 0..res {
            let mut s = 0.0;
            for yy in y.saturating_sub(1)..=(y + 1).min(res - 1) {
                for xx in x.saturating_sub(1)..=(x + 1).min(res - 1) {
                    s += shifted[yy * res + xx];
                }
            }
            out[y * res + x] = s / 9.0;
        }
    }
    out
}

/// Draws the novel-view offset for the reference.
pub fn sample_view_delta<R: Rng + ?Sized>(rng: &mut R, cfg: &DataConfig, radius: f64) -> ViewDelta {
    let n = &cfg.natural;
    ViewDelta {
        dtheta: rng.random_range(-n.dtheta_max..=n.dtheta_max),
        dphi: rng.random_range(0.0..std::f64::consts::TAU),
        dradius: rng.random_range(-n.dradius_frac..=n.dradius_frac) * radius,
    }
}

/// Pair from the reverse pipeline. The target is the source image itself;
/// the relative pose maps the reference viewpoint back to the source one.
pub fn build_natural_pair<R: Rng + ?Sized>(
    source: &NaturalSource,
    rng: &mut R,
    cfg: &DataConfig,
    synthesizer: &dyn NovelViewSynthesizer,
    captioner: &dyn Captioner,
    id: impl Into<String>,
) -> Result<TrainingPair> {
    let res = source.image.width();
    if source.mask.len() != res * source.image.height() {
        return Err(Error::invalid("mask", "mask size differs from image size"));
    }
    let bbox = BBox::from_mask(&source.mask, res).ok_or_else(|| Error::invalid("mask", "empty foreground mask"))?;
    let dst_pose = synthesizer.source_pose(source);
    let delta = sample_view_delta(rng, cfg, dst_pose.radius());
    let (reference, src_pose) = synthesizer.synthesize(source, delta)?;
    Ok(TrainingPair {
        id: id.into(),
        reference,
        target: source.image.clone(),
        src_pose,
        dst_pose,
        bbox,
        caption: captioner.caption(source)?,
        background: None,
        provenance: Provenance::Natural,
        scene: source.meta.as_ref().map(|m| m.info.clone()),
    })
}
