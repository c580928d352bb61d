use super::image::{RgbImage, RgbaImage};
use crate::error::{Error, Result};

/// Alpha threshold for the tight object box.
pub const FIT_ALPHA_THRESHOLD: f32 = 0.25;

/// Premultiplied "over": `fg.rgb + (1 - fg.a) · bg`.
pub fn alpha_compose(fg: &RgbaImage, bg: &RgbImage) -> Result<RgbImage> {
    if fg.width() != bg.width() || fg.height() != bg.height() {
        return Err(Error::invalid(
            "background",
            format!(
                "{}x{} foreground over {}x{} background",
                fg.width(),
                fg.height(),
                bg.width(),
                bg.height()
            ),
        ));
    }
    let data = fg
        .data()
        .chunks(4)
        .zip(bg.data().chunks(3))
        .flat_map(|(f, b)| {
            let k = 1.0 - f[3];
            [f[0] + k * b[0], f[1] + k * b[1], f[2] + k * b[2]]
        })
        .collect();
    RgbImage::from_data(bg.width(), bg.height(), data)
}

/// Crops a render to the tight box of its alpha mask and stretches the crop
/// back to the full frame. Returns the crop box aspect `w / h` alongside.
/// An empty render is returned unchanged with aspect 1.
pub fn fit_to_frame(img: &RgbaImage) -> (RgbaImage, f64) {
    match img.alpha_bounds(FIT_ALPHA_THRESHOLD) {
        None => (img.clone(), 1.0),
        Some((x0, y0, x1, y1)) => {
            let crop = img.crop(x0, y0, x1 - x0, y1 - y0);
            let aspect = (x1 - x0) as f64 / (y1 - y0) as f64;
            (crop.resize_bilinear(img.width(), img.height()), aspect)
        }
    }
}
