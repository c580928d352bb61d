//! Float images with 8-bit PNG storage.
//!
//! Channel values live in `[0, 1]`. RGBA images are premultiplied: a pixel
//! with zero alpha has zero color, and PNG files store the premultiplied
//! values as-is so that a write/read/write cycle is byte-stable.

use std::io::Cursor;
use std::path::Path;

use image::{ImageBuffer, ImageFormat, Rgb, Rgba};

use crate::error::{Error, Result};

/// Quantizes a unit value to a byte, `round(255 v)` with clamping.
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

macro_rules! image_type {
    ($name:ident, $channels:expr) => {
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name {
            width: usize,
            height: usize,
            data: Vec<f32>,
        }

        impl $name {
            pub const CHANNELS: usize = $channels;

            pub fn zeros(width: usize, height: usize) -> Self {
                Self {
                    width,
                    height,
                    data: vec![0.0; width * height * $channels],
                }
            }

            pub fn from_data(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
                if data.len() != width * height * $channels {
                    return Err(Error::invalid(
                        "image",
                        format!(
                            "{} values for a {width}x{height}x{} image",
                            data.len(),
                            $channels
                        ),
                    ));
                }
                Ok(Self {
                    width,
                    height,
                    data,
                })
            }

            pub fn width(&self) -> usize {
                self.width
            }

            pub fn height(&self) -> usize {
                self.height
            }

            pub fn data(&self) -> &[f32] {
                &self.data
            }

            pub fn data_mut(&mut self) -> &mut [f32] {
                &mut self.data
            }

            pub fn into_data(self) -> Vec<f32> {
                self.data
            }

            pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
                let i = (y * self.width + x) * $channels;
                &self.data[i..i + $channels]
            }

            pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
                let i = (y * self.width + x) * $channels;
                &mut self.data[i..i + $channels]
            }

            /// Rounds every value to the nearest 8-bit level.
            pub fn quantized(&self) -> Self {
                Self {
                    width: self.width,
                    height: self.height,
                    data: self
                        .data
                        .iter()
                        .map(|&v| quantize(v) as f32 / 255.0)
                        .collect(),
                }
            }

            pub fn to_bytes(&self) -> Vec<u8> {
                self.data.iter().map(|&v| quantize(v)).collect()
            }

            pub fn save_png(&self, path: &Path) -> Result<()> {
                let bytes = self.png_bytes()?;
                std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
            }

            pub fn load_png(path: &Path) -> Result<Self> {
                let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
                Self::from_png_bytes(&bytes)
            }

            /// Bilinear resize with half-pixel centers and clamped edges.
            pub fn resize_bilinear(&self, width: usize, height: usize) -> Self {
                let data = resize_bilinear(
                    &self.data,
                    self.width,
                    self.height,
                    $channels,
                    width,
                    height,
                );
                Self {
                    width,
                    height,
                    data,
                }
            }

            /// Copies the pixel rectangle `[x0, x0 + w) × [y0, y0 + h)`.
            pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Self {
                assert!(x0 + w <= self.width && y0 + h <= self.height, "crop out of bounds");
                let mut out = Self::zeros(w, h);
                for y in 0..h {
                    let src = ((y0 + y) * self.width + x0) * $channels;
                    let dst = y * w * $channels;
                    out.data[dst..dst + w * $channels]
                        .copy_from_slice(&self.data[src..src + w * $channels]);
                }
                out
            }
        }
    };
}

image_type!(RgbImage, 3);
image_type!(RgbaImage, 4);

impl RgbImage {
    pub fn filled(width: usize, height: usize, color: [f32; 3]) -> Self {
        let mut img = Self::zeros(width, height);
        for px in img.data.chunks_mut(3) {
            px.copy_from_slice(&color);
        }
        img
    }

    pub fn png_bytes(&self) -> Result<Vec<u8>> {
        let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, self.to_bytes())
                .expect("buffer size matches dimensions");
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    /// Decodes any PNG into RGB; an alpha channel, if present, is dropped.
    pub fn from_png_bytes(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_rgb8();
        let (w, h) = img.dimensions();
        let data = img.into_raw().into_iter().map(|b| b as f32 / 255.0).collect();
        Self::from_data(w as usize, h as usize, data)
    }

    /// Mean color.
    pub fn mean(&self) -> [f32; 3] {
        let n = (self.width * self.height).max(1) as f32;
        let mut m = [0.0f32; 3];
        for px in self.data.chunks(3) {
            for c in 0..3 {
                m[c] += px[c];
            }
        }
        m.map(|v| v / n)
    }
}

impl RgbaImage {
    pub fn png_bytes(&self) -> Result<Vec<u8>> {
        let buf: ImageBuffer<Rgba<u8>, Vec<u8>> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, self.to_bytes())
                .expect("buffer size matches dimensions");
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    /// Decodes a PNG whose color channels are premultiplied. Images without
    /// alpha are treated as opaque.
    pub fn from_png_bytes(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_rgba8();
        let (w, h) = img.dimensions();
        let mut data: Vec<f32> = img.into_raw().into_iter().map(|b| b as f32 / 255.0).collect();
        for px in data.chunks_mut(4) {
            if px[3] == 0.0 {
                px[..3].fill(0.0);
            }
        }
        Self::from_data(w as usize, h as usize, data)
    }

    pub fn alpha(&self, x: usize, y: usize) -> f32 {
        self.data[(y * self.width + x) * 4 + 3]
    }

    /// Drops alpha; premultiplied color is the composite over black.
    pub fn to_rgb(&self) -> RgbImage {
        let data = self
            .data
            .chunks(4)
            .flat_map(|px| [px[0], px[1], px[2]])
            .collect();
        RgbImage {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Opaque RGBA from an RGB image.
    pub fn opaque(rgb: &RgbImage) -> Self {
        let data = rgb
            .data
            .chunks(3)
            .flat_map(|px| [px[0], px[1], px[2], 1.0])
            .collect();
        Self {
            width: rgb.width,
            height: rgb.height,
            data,
        }
    }

    /// Pixel box `(x0, y0, x1, y1)` (exclusive end) of pixels with alpha
    /// above `threshold`, or `None` when no pixel qualifies.
    pub fn alpha_bounds(&self, threshold: f32) -> Option<(usize, usize, usize, usize)> {
        let mut b: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.alpha(x, y) > threshold {
                    b = Some(match b {
                        None => (x, y, x + 1, y + 1),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x + 1), y1.max(y + 1)),
                    });
                }
            }
        }
        b
    }

    /// Checks the premultiplied-zero convention.
    pub fn is_premultiplied_clean(&self) -> bool {
        self.data
            .chunks(4)
            .all(|px| px[3] > 0.0 || px[..3].iter().all(|&v| v == 0.0))
    }
}

pub(crate) fn resize_bilinear(
    src: &[f32],
    sw: usize,
    sh: usize,
    channels: usize,
    dw: usize,
    dh: usize,
) -> Vec<f32> {
    let mut out = vec![0.0f32; dw * dh * channels];
    if dw == 0 || dh == 0 {
        return out;
    }
    let sx = sw as f64 / dw as f64;
    let sy = sh as f64 / dh as f64;
    for y in 0..dh {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (sh - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let ty = (fy - y0 as f64) as f32;
        for x in 0..dw {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (sw - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let tx = (fx - x0 as f64) as f32;
            for c in 0..channels {
                let p = |xx: usize, yy: usize| src[(yy * sw + xx) * channels + c];
                let top = p(x0, y0) * (1.0 - tx) + p(x1, y0) * tx;
                let bot = p(x0, y1) * (1.0 - tx) + p(x1, y1) * tx;
                out[(y * dw + x) * channels + c] = top * (1.0 - ty) + bot * ty;
            }
        }
    }
    out
}
