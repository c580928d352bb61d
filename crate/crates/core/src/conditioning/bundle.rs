use customnet_autograd::{Real, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::place_object;
use crate::camera::{embed_pose, RelativePose};
use crate::datapipe::{BBox, TrainingPair};
use crate::error::{Error, Result};
use crate::world::{Caption, RgbImage, RgbaImage};

/// Channels of the denoiser input: noisy image, placed object RGB and
/// alpha, background.
pub const UNET_IN_CHANNELS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// Background from the text prompt.
    Generation,
    /// Background supplied as an image.
    Composition,
}

/// The raw conditions of one sample. Dropped conditions are flags; the
/// learned null tokens replace them when the conditions are encoded.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionBundle {
    pub reference: RgbaImage,
    pub pose: [f64; 4],
    pub bbox: BBox,
    /// Reference resized into the bbox on an empty canvas.
    pub placed: RgbaImage,
    /// The empty caption is the null prompt.
    pub caption: Caption,
    pub background: Option<RgbImage>,
    pub drop_text: bool,
    pub drop_object: bool,
}

impl ConditionBundle {
    pub fn new(
        reference: RgbaImage,
        rel_pose: &RelativePose,
        bbox: BBox,
        caption: Caption,
        background: Option<RgbImage>,
        res: usize,
    ) -> Result<Self> {
        rel_pose.validate()?;
        if reference.width() != res || reference.height() != res {
            return Err(Error::invalid(
                "reference",
                format!("{}x{} reference, model resolution is {res}", reference.width(), reference.height()),
            ));
        }
        if let Some(bg) = &background {
            if bg.width() != res || bg.height() != res {
                return Err(Error::invalid(
                    "background",
                    format!("{}x{} background, model resolution is {res}", bg.width(), bg.height()),
                ));
            }
        }
        let placed = place_object(&reference, &bbox, res)?;
        Ok(Self {
            reference,
            pose: embed_pose(rel_pose),
            bbox,
            placed,
            caption,
            background,
            drop_text: false,
            drop_object: false,
        })
    }

    /// Conditions of a training pair in the given branch. Composition uses
    /// the pair's background and the null prompt.
    pub fn from_pair(pair: &TrainingPair, branch: Branch) -> Result<Self> {
        let (caption, background) = match branch {
            Branch::Generation => (pair.caption.clone(), None),
            Branch::Composition => {
                let bg = pair
                    .background
                    .clone()
                    .ok_or_else(|| Error::invalid("background", format!("pair {} has no background", pair.id)))?;
                (Caption::empty(), Some(bg))
            }
        };
        Self::new(pair.reference.clone(), &pair.rel_pose(), pair.bbox, caption, background, pair.resolution())
    }

    pub fn branch(&self) -> Branch {
        if self.background.is_some() {
            Branch::Composition
        } else {
            Branch::Generation
        }
    }

    pub fn resolution(&self) -> usize {
        self.placed.width()
    }

    /// Whether the text branch sees only the null token.
    pub fn text_is_null(&self) -> bool {
        self.drop_text || self.caption.is_empty()
    }

    /// The unconditional counterpart used by guidance: null object and null
    /// text, channel inputs kept.
    pub fn unconditional(&self) -> Self {
        Self {
            drop_text: true,
            drop_object: true,
            ..self.clone()
        }
    }
}

/// Drops the text with probability `p_text`; independently, drops every
/// token condition (object and text) with probability `p_all`.
pub fn condition_dropout<R: Rng + ?Sized>(
    mut bundle: ConditionBundle,
    rng: &mut R,
    p_text: f64,
    p_all: f64,
) -> Result<ConditionBundle> {
    for (name, p) in [("p_text", p_text), ("p_all", p_all)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(name, format!("{p} outside [0, 1]")));
        }
    }
    let drop_text = rng.random::<f64>() < p_text;
    let drop_all = rng.random::<f64>() < p_all;
    bundle.drop_text |= drop_text || drop_all;
    bundle.drop_object |= drop_all;
    Ok(bundle)
}

/// Denoiser input `[h, w, 10]` for one sample: `z_t` (`[h, w, 3]`), placed
/// RGB, placed alpha, background (zeros in the generation branch).
pub fn assemble_unet_input<F: Real>(z_t: &Tensor<F>, bundle: &ConditionBundle) -> Result<Tensor<F>> {
    let res = bundle.resolution();
    if z_t.shape() != [res, res, 3] {
        return Err(Error::invalid(
            "z_t",
            format!("shape {:?}, expected [{res}, {res}, 3]", z_t.shape()),
        ));
    }
    let mut out = Vec::with_capacity(res * res * UNET_IN_CHANNELS);
    write_input(&mut out, z_t.data(), bundle, true);
    Ok(Tensor::new(vec![res, res, UNET_IN_CHANNELS], out))
}

/// Batched input `[b, h, w, 10]` from `z_t` (`[b, h, w, 3]`). With
/// `concat_object` off the placed-object channels are zero.
pub fn assemble_batch<F: Real>(z_t: &Tensor<F>, bundles: &[&ConditionBundle], concat_object: bool) -> Tensor<F> {
    let res = bundles[0].resolution();
    let per = res * res * 3;
    assert_eq!(z_t.shape(), [bundles.len(), res, res, 3]);
    let mut out = Vec::with_capacity(bundles.len() * res * res * UNET_IN_CHANNELS);
    for (i, b) in bundles.iter().enumerate() {
        write_input(&mut out, &z_t.data()[i * per..(i + 1) * per], b, concat_object);
    }
    Tensor::new(vec![bundles.len(), res, res, UNET_IN_CHANNELS], out)
}

fn write_input<F: Real>(out: &mut Vec<F>, z: &[F], b: &ConditionBundle, concat_object: bool) {
    let res = b.resolution();
    let f = |v: f32| F::from_f64(v as f64);
    for p in 0..res * res {
        out.extend_from_slice(&z[p * 3..p * 3 + 3]);
        let (x, y) = (p % res, p / res);
        if concat_object {
            out.extend(b.placed.pixel(x, y).iter().map(|&v| f(v)));
        } else {
            out.extend([F::zero(); 4]);
        }
        match &b.background {
            Some(bg) => out.extend(bg.pixel(x, y).iter().map(|&v| f(v))),
            None => out.extend([F::zero(); 3]),
        }
    }
}
