//! Per-sample scores for each control axis.

use customnet_autograd::ParamStore;

use crate::datapipe::BBox;
use crate::encoders::{encode_object, EncoderConfig};
use crate::error::{Error, Result};
use crate::world::{Family, RgbImage, RgbaImage};

/// Image embedding used by the identity score.
pub trait ImageEncoder {
    fn embed(&self, image: &RgbImage) -> Result<Vec<f64>>;
}

/// The trained object encoder, fed opaque RGB images.
pub struct ObjectEncoder<'a> {
    pub params: &'a ParamStore<f32>,
    pub config: &'a EncoderConfig,
}

impl ImageEncoder for ObjectEncoder<'_> {
    fn embed(&self, image: &RgbImage) -> Result<Vec<f64>> {
        let res = image.width();
        Ok(encode_object(self.params, self.config, &RgbaImage::opaque(image), res)?.0)
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// The bbox region of `img`, resampled to `res × res`.
pub fn crop_to(img: &RgbImage, bbox: &BBox, res: usize) -> RgbImage {
    let (x0, y0, x1, y1) = bbox.pixel_rect(img.width());
    let (w, h) = ((x1 - x0).max(1), (y1 - y0).max(1));
    let (x0, y0) = (x0.min(img.width() - w), y0.min(img.height() - h));
    img.crop(x0, y0, w, h).resize_bilinear(res, res)
}

/// Cosine between the embeddings of the generated bbox crop and of the
/// reference composed over black.
pub fn identity_score(encoder: &dyn ImageEncoder, generated: &RgbImage, bbox: &BBox, reference: &RgbaImage) -> Result<f64> {
    let crop = crop_to(generated, bbox, reference.width());
    Ok(cosine(&encoder.embed(&crop)?, &encoder.embed(&reference.to_rgb())?))
}

fn check_same(a: &RgbImage, b: &RgbImage, what: &str) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::invalid(what, "image sizes differ"));
    }
    Ok(())
}

/// Mean squared error over the pixels selected by `keep(x, y)`.
fn masked_mse(a: &RgbImage, b: &RgbImage, keep: impl Fn(usize, usize) -> bool) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for y in 0..a.height() {
        for x in 0..a.width() {
            if keep(x, y) {
                for (p, q) in a.pixel(x, y).iter().zip(b.pixel(x, y)) {
                    sum += (*p as f64 - *q as f64).powi(2);
                }
                n += 3;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// `(mse to the target-pose render, mse to the source-pose render)` inside
/// the bbox.
pub fn view_fidelity(generated: &RgbImage, bbox: &BBox, target: &RgbImage, source: &RgbImage) -> Result<(f64, f64)> {
    check_same(generated, target, "target")?;
    check_same(generated, source, "source")?;
    let (x0, y0, x1, y1) = bbox.pixel_rect(generated.width());
    let inside = |x: usize, y: usize| x >= x0 && x < x1 && y >= y0 && y < y1;
    Ok((masked_mse(generated, target, inside), masked_mse(generated, source, inside)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocationScore {
    pub iou: f64,
    /// No foreground survived extraction; `iou` is 0.
    pub empty: bool,
}

/// Square opening (erosion then dilation) with a `(2r + 1)` window.
/// Pixels outside the frame count as background for the erosion.
pub fn open_mask(mask: &[bool], res: usize, radius: usize) -> Vec<bool> {
    let r = radius as isize;
    let n = res as isize;
    let at = |m: &[bool], x: isize, y: isize| x >= 0 && y >= 0 && x < n && y < n && m[(y * n + x) as usize];
    let window = |m: &[bool], all: bool| -> Vec<bool> {
        (0..res * res)
            .map(|i| {
                let (x, y) = ((i % res) as isize, (i / res) as isize);
                let mut it = (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)));
                if all {
                    it.all(|(dx, dy)| at(m, x + dx, y + dy))
                } else {
                    it.any(|(dx, dy)| at(m, x + dx, y + dy))
                }
            })
            .collect()
    };
    window(&window(mask, true), false)
}

/// Foreground mask: any channel differing from the background estimate by
/// more than `tau`, cleaned by an opening.
pub fn foreground_mask(generated: &RgbImage, background: &RgbImage, tau: f64, open_radius: usize) -> Result<Vec<bool>> {
    check_same(generated, background, "background")?;
    let res = generated.width();
    let raw: Vec<bool> = generated
        .data()
        .chunks_exact(3)
        .zip(background.data().chunks_exact(3))
        .map(|(a, b)| a.iter().zip(b).any(|(p, q)| (*p as f64 - *q as f64).abs() > tau))
        .collect();
    Ok(open_mask(&raw, res, open_radius))
}

/// IoU between the tight box of the extracted foreground and the request.
pub fn location_iou(
    generated: &RgbImage,
    background: &RgbImage,
    requested: &BBox,
    tau: f64,
    open_radius: usize,
) -> Result<LocationScore> {
    let mask = foreground_mask(generated, background, tau, open_radius)?;
    Ok(match BBox::from_mask(&mask, generated.width()) {
        Some(found) => LocationScore {
            iou: found.iou(requested),
            empty: false,
        },
        None => LocationScore { iou: 0.0, empty: true },
    })
}

/// Probability over background families.
pub trait BackgroundProbe {
    fn family_probs(&self, image: &RgbImage) -> Result<[f64; 4]>;
}

/// Replaces the bbox region by the mean color of the remaining pixels.
pub fn mask_bbox(img: &RgbImage, bbox: &BBox) -> RgbImage {
    let (x0, y0, x1, y1) = bbox.pixel_rect(img.width());
    let inside = |x: usize, y: usize| x >= x0 && x < x1 && y >= y0 && y < y1;
    let mut sum = [0.0f64; 3];
    let mut n = 0usize;
    for y in 0..img.height() {
        for x in 0..img.width() {
            if !inside(x, y) {
                for (s, &v) in sum.iter_mut().zip(img.pixel(x, y)) {
                    *s += v as f64;
                }
                n += 1;
            }
        }
    }
    let fill = sum.map(|s| if n == 0 { 0.5 } else { (s / n as f64) as f32 });
    let mut out = img.clone();
    for y in y0..y1 {
        for x in x0..x1 {
            out.pixel_mut(x, y).copy_from_slice(&fill);
        }
    }
    out
}

/// Probe mass on the captioned background family, looking only outside
/// the bbox. Captions without a family score 0.
pub fn background_text_score(probe: &dyn BackgroundProbe, generated: &RgbImage, bbox: &BBox, family: Option<Family>) -> Result<f64> {
    let Some(family) = family else { return Ok(0.0) };
    Ok(probe.family_probs(&mask_bbox(generated, bbox))?[family.index()])
}

/// Pixels outside the bbox pixel rectangle grown by `dilation` on each side.
pub fn outside_dilated(bbox: &BBox, res: usize, dilation: usize) -> Vec<bool> {
    let (x0, y0, x1, y1) = bbox.pixel_rect(res);
    let (x0, y0) = (x0.saturating_sub(dilation), y0.saturating_sub(dilation));
    let (x1, y1) = (x1 + dilation, y1 + dilation);
    (0..res * res)
        .map(|i| {
            let (x, y) = (i % res, i / res);
            !(x >= x0 && x < x1 && y >= y0 && y < y1)
        })
        .collect()
}

pub const COMPOSITION_DILATION: usize = 2;

/// MSE against the provided background outside the dilated bbox.
pub fn composition_fidelity(generated: &RgbImage, provided: &RgbImage, bbox: &BBox) -> Result<f64> {
    check_same(generated, provided, "background")?;
    let res = generated.width();
    let keep = outside_dilated(bbox, res, COMPOSITION_DILATION);
    Ok(masked_mse(generated, provided, |x, y| keep[y * res + x]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn opening_removes_speckle_and_keeps_blocks() {
        let res = 8;
        let mut m = vec![false; res * res];
        m[0] = true;
        for y in 3..6 {
            for x in 3..6 {
                m[y * res + x] = true;
            }
        }
        let o = open_mask(&m, res, 1);
        assert!(!o[0]);
        assert_eq!(o.iter().filter(|&&v| v).count(), 9);
    }

    #[test]
    fn mask_fill_uses_outside_mean() {
        let mut img = RgbImage::filled(4, 4, [0.2, 0.4, 0.6]);
        img.pixel_mut(1, 1).copy_from_slice(&[1.0, 1.0, 1.0]);
        let out = mask_bbox(&img, &BBox::new(0.25, 0.25, 0.25, 0.25).unwrap());
        assert_eq!(out.pixel(1, 1), &[0.2, 0.4, 0.6]);
    }
}
