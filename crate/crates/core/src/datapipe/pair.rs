use rand::Rng;
use serde::{Deserialize, Serialize};

use super::BBox;
use crate::camera::{relative_pose, RelativePose, SphericalPose};
use crate::conditioning::place_object;
use crate::error::{Error, Result};
use crate::world::{
    alpha_compose, caption_of, fit_to_frame, render_background, render_object, BackgroundSpec, Caption, Family,
    PrimitiveObject, RgbImage, RgbaImage, WorldRanges,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Synthetic,
    Natural,
}

/// Procedural ground truth behind a pair, kept for evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneInfo {
    pub object: PrimitiveObject,
    pub background: BackgroundSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub id: String,
    /// Background-free object, premultiplied.
    pub reference: RgbaImage,
    pub target: RgbImage,
    pub src_pose: SphericalPose,
    pub dst_pose: SphericalPose,
    pub bbox: BBox,
    pub caption: Caption,
    pub background: Option<RgbImage>,
    pub provenance: Provenance,
    pub scene: Option<SceneInfo>,
}

impl TrainingPair {
    pub fn rel_pose(&self) -> RelativePose {
        relative_pose(&self.src_pose, &self.dst_pose)
    }

    pub fn resolution(&self) -> usize {
        self.target.width()
    }

    pub fn validate(&self) -> Result<()> {
        let res = self.resolution();
        let square = |w: usize, h: usize| w == res && h == res;
        if !square(self.target.width(), self.target.height())
            || !square(self.reference.width(), self.reference.height())
            || self
                .background
                .as_ref()
                .is_some_and(|b| !square(b.width(), b.height()))
        {
            return Err(Error::invalid("pair", format!("{}: images must share a square resolution", self.id)));
        }
        if !self.reference.is_premultiplied_clean() {
            return Err(Error::invalid("reference", format!("{}: zero-alpha pixels carry color", self.id)));
        }
        Ok(())
    }
}

/// Settings shared by both pipelines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub resolution: usize,
    pub world: WorldRanges,
    pub bbox_min_side: f64,
    pub bbox_max_side: f64,
    /// Synthetic-to-natural record ratio of the mixed kind.
    pub mixed_ratio: [u32; 2],
    /// Object-only pairs: black background, no background image.
    pub object_only: bool,
    pub natural: NaturalConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            resolution: 32,
            world: WorldRanges::default(),
            bbox_min_side: 0.2,
            bbox_max_side: 0.8,
            mixed_ratio: [1, 2],
            object_only: false,
            natural: NaturalConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NaturalConfig {
    /// Novel views are drawn with `|dtheta| <= dtheta_max`.
    pub dtheta_max: f64,
    /// Radius change as a fraction of the scene radius.
    pub dradius_frac: f64,
    /// Blend of object color towards the mean background color.
    pub tint: f32,
    /// Peak darkening of the drop shadow.
    pub shadow: f32,
}

impl Default for NaturalConfig {
    fn default() -> Self {
        Self {
            dtheta_max: std::f64::consts::FRAC_PI_4,
            dradius_frac: 0.2,
            tint: 0.15,
            shadow: 0.35,
        }
    }
}

/// Everything drawn for one synthetic pair, before rendering.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDraw {
    pub object: PrimitiveObject,
    pub src_pose: SphericalPose,
    pub dst_pose: SphericalPose,
    pub bbox: BBox,
    pub background: BackgroundSpec,
}

/// Renders the object at `pose` and stretches its tight box to the frame.
pub fn fitted_render(obj: &PrimitiveObject, pose: &SphericalPose, res: usize) -> Result<(RgbaImage, f64)> {
    Ok(fit_to_frame(&render_object(obj, pose, res)?))
}

fn sample_draw<R: Rng + ?Sized>(rng: &mut R, cfg: &DataConfig) -> Result<(SyntheticDraw, RgbaImage)> {
    let object = cfg.world.sample_object(rng);
    let src_pose = cfg.world.sample_pose(rng);
    let dst_pose = cfg.world.sample_pose(rng);
    let (dst_fit, aspect) = fitted_render(&object, &dst_pose, cfg.resolution)?;
    let bbox = BBox::sample(rng, aspect, cfg.bbox_min_side, cfg.bbox_max_side);
    let background = if cfg.object_only {
        BackgroundSpec::solid([0.0; 3])
    } else {
        let family = Family::ALL[rng.random_range(0..Family::ALL.len())];
        BackgroundSpec::random(family, rng)
    };
    Ok((
        SyntheticDraw {
            object,
            src_pose,
            dst_pose,
            bbox,
            background,
        },
        dst_fit,
    ))
}

/// Target for a drawn scene: the fitted target view placed at the bbox over
/// the background.
pub fn synthetic_target(draw: &SyntheticDraw, res: usize) -> Result<RgbImage> {
    let scene = SceneInfo {
        object: draw.object.clone(),
        background: draw.background.clone(),
    };
    scene_view(&scene, &draw.dst_pose, &draw.bbox, res)
}

/// The scene's object seen from `pose`, fitted into `bbox` over the scene
/// background.
pub fn scene_view(scene: &SceneInfo, pose: &SphericalPose, bbox: &BBox, res: usize) -> Result<RgbImage> {
    let (fit, _) = fitted_render(&scene.object, pose, res)?;
    alpha_compose(&place_object(&fit, bbox, res)?, &render_background(&scene.background, res))
}

/// Pair from the multi-view pipeline. Images are quantized to 8-bit levels
/// so that they survive PNG storage bit-exactly.
pub fn build_synthetic_pair<R: Rng + ?Sized>(rng: &mut R, cfg: &DataConfig, id: impl Into<String>) -> Result<TrainingPair> {
    let res = cfg.resolution;
    let (draw, dst_fit) = sample_draw(rng, cfg)?;
    let (reference, _) = fitted_render(&draw.object, &draw.src_pose, res)?;
    let bg = render_background(&draw.background, res);
    let target = alpha_compose(&place_object(&dst_fit, &draw.bbox, res)?, &bg)?;
    Ok(TrainingPair {
        id: id.into(),
        reference: reference.quantized(),
        target: target.quantized(),
        src_pose: draw.src_pose,
        dst_pose: draw.dst_pose,
        bbox: draw.bbox,
        caption: caption_of(&draw.object, draw.background.family()),
        background: (!cfg.object_only).then(|| bg.quantized()),
        provenance: Provenance::Synthetic,
        scene: Some(SceneInfo {
            object: draw.object,
            background: draw.background,
        }),
    })
}

/// Redraws the scene of a synthetic pair from the same rng state.
pub fn draw_synthetic<R: Rng + ?Sized>(rng: &mut R, cfg: &DataConfig) -> Result<SyntheticDraw> {
    Ok(sample_draw(rng, cfg)?.0)
}
