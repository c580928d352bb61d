use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EPS: f64 = 1e-9;

/// Normalized box: top-left `(x, y)` and extents `(w, h)`, all in `[0, 1]`.
/// Serializes as `[x, y, w, h]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub const FULL: BBox = BBox {
        x: 0.0,
        y: 0.0,
        w: 1.0,
        h: 1.0,
    };

    /// Validates containment in the unit square and positive extents.
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let finite = [x, y, w, h].iter().all(|v| v.is_finite());
        if !finite || x < 0.0 || y < 0.0 || w <= 0.0 || h <= 0.0 || w > 1.0 || h > 1.0 {
            return Err(Error::invalid(
                "bbox",
                format!("[{x}, {y}, {w}, {h}] must have x, y >= 0 and w, h in (0, 1]"),
            ));
        }
        if x + w > 1.0 + EPS || y + h > 1.0 + EPS {
            return Err(Error::invalid(
                "bbox",
                format!("[{x}, {y}, {w}, {h}] extends past the frame (x + w or y + h > 1)"),
            ));
        }
        Ok(Self { x, y, w, h })
    }

    /// As [`BBox::new`], also requiring both sides of at least `min_side`.
    pub fn with_min_side(x: f64, y: f64, w: f64, h: f64, min_side: f64) -> Result<Self> {
        let b = Self::new(x, y, w, h)?;
        if w < min_side - EPS || h < min_side - EPS {
            return Err(Error::invalid(
                "bbox",
                format!("sides {w} x {h} below minimum {min_side}"),
            ));
        }
        Ok(b)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let ix = ((self.x + self.w).min(other.x + other.w) - self.x.max(other.x)).max(0.0);
        let iy = ((self.y + self.h).min(other.y + other.h) - self.y.max(other.y)).max(0.0);
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Pixel rectangle `(x0, y0, x1, y1)`, end-exclusive, by rounding the
    /// corner and the extents separately and clipping to the frame.
    pub fn pixel_rect(&self, res: usize) -> (usize, usize, usize, usize) {
        let r = res as f64;
        let x0 = ((self.x * r).round() as usize).min(res);
        let y0 = ((self.y * r).round() as usize).min(res);
        let pw = (self.w * r).round() as usize;
        let ph = (self.h * r).round() as usize;
        (x0, y0, (x0 + pw).min(res), (y0 + ph).min(res))
    }

    /// Tight box of a row-major `res × res` mask, or `None` if empty.
    pub fn from_mask(mask: &[bool], res: usize) -> Option<BBox> {
        assert_eq!(mask.len(), res * res);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
            let (x, y) = (i % res, i / res);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x + 1);
            y1 = y1.max(y + 1);
        }
        if x0 == usize::MAX {
            return None;
        }
        let r = res as f64;
        Some(BBox {
            x: x0 as f64 / r,
            y: y0 as f64 / r,
            w: (x1 - x0) as f64 / r,
            h: (y1 - y0) as f64 / r,
        })
    }

    /// Random contained box whose `w / h` follows `aspect` where the side
    /// limits allow. The longer side is uniform in `[min_side, max_side]`
    /// and the shorter side is raised to `min_side` if needed.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, aspect: f64, min_side: f64, max_side: f64) -> BBox {
        let long = rng.random_range(min_side..=max_side);
        let (mut w, mut h) = if aspect >= 1.0 {
            (long, long / aspect)
        } else {
            (long * aspect, long)
        };
        w = w.clamp(min_side, 1.0);
        h = h.clamp(min_side, 1.0);
        let x = rng.random_range(0.0..=1.0 - w);
        let y = rng.random_range(0.0..=1.0 - h);
        BBox { x, y, w, h }
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}
