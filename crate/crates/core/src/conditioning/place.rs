use crate::datapipe::BBox;
use crate::error::{Error, Result};
use crate::world::RgbaImage;

/// Resizes the reference into the bbox's pixel rectangle on an otherwise
/// empty `res × res` canvas.
pub fn place_object(reference: &RgbaImage, bbox: &BBox, res: usize) -> Result<RgbaImage> {
    let (x0, y0, x1, y1) = bbox.pixel_rect(res);
    let r = res as f64;
    let pw = (bbox.w * r).round() as usize;
    let ph = (bbox.h * r).round() as usize;
    if pw == 0 || ph == 0 {
        return Err(Error::invalid(
            "bbox",
            format!("{}x{} normalized box rounds to zero pixels at {res}", bbox.w, bbox.h),
        ));
    }
    let resized = reference.resize_bilinear(pw, ph);
    let mut canvas = RgbaImage::zeros(res, res);
    for y in y0..y1 {
        for x in x0..x1 {
            canvas
                .pixel_mut(x, y)
                .copy_from_slice(resized.pixel(x - x0, y - y0));
        }
    }
    Ok(canvas)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_box_is_resize() {
        let mut r = RgbaImage::zeros(8, 8);
        for (i, v) in r.data_mut().iter_mut().enumerate() {
            *v = (i % 5) as f32 / 5.0;
        }
        let c = place_object(&r, &BBox::FULL, 16).unwrap();
        assert_eq!(c, r.resize_bilinear(16, 16));
    }

    #[test]
    fn tiny_box_rejected() {
        let r = RgbaImage::zeros(8, 8);
        let b = BBox::new(0.0, 0.0, 0.01, 0.5).unwrap();
        assert!(place_object(&r, &b, 32).is_err());
    }
}
