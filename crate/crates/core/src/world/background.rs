//! Procedural background textures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::image::RgbImage;
use crate::error::{Error, Result};

/// Lattice spacing of value noise, in pixels.
pub const NOISE_SPACING: usize = 8;
/// Minimum RGB distance between the two colors of a random palette.
pub const MIN_PALETTE_CONTRAST: f32 = 0.4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Solid,
    Gradient,
    Checker,
    Noise,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Solid, Family::Gradient, Family::Checker, Family::Noise];

    pub fn name(self) -> &'static str {
        match self {
            Family::Solid => "solid",
            Family::Gradient => "gradient",
            Family::Checker => "checker",
            Family::Noise => "noise",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSpec {
    family: Family,
    palette: Vec<[f32; 3]>,
    cell: Option<usize>,
    seed: u64,
}

impl BackgroundSpec {
    /// Solid takes one color, the other families two; `cell` is required for
    /// checker and forbidden otherwise.
    pub fn new(family: Family, palette: Vec<[f32; 3]>, cell: Option<usize>, seed: u64) -> Result<Self> {
        let want = if family == Family::Solid { 1 } else { 2 };
        if palette.len() != want {
            return Err(Error::invalid(
                "palette",
                format!("{} needs {want} colors, got {}", family.name(), palette.len()),
            ));
        }
        if palette.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid("palette", "colors must lie in [0, 1]"));
        }
        match (family, cell) {
            (Family::Checker, Some(c)) if c > 0 => {}
            (Family::Checker, _) => return Err(Error::invalid("cell", "checker needs a positive cell")),
            (_, Some(_)) => return Err(Error::invalid("cell", "only checker takes a cell size")),
            _ => {}
        }
        Ok(Self {
            family,
            palette,
            cell,
            seed,
        })
    }

    pub fn solid(color: [f32; 3]) -> Self {
        Self::new(Family::Solid, vec![color], None, 0).expect("valid solid")
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn palette(&self) -> &[[f32; 3]] {
        &self.palette
    }

    pub fn cell(&self) -> Option<usize> {
        self.cell
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A random spec of the given family with a contrasting palette.
    pub fn random<R: Rng + ?Sized>(family: Family, rng: &mut R) -> Self {
        let color = |rng: &mut R| -> [f32; 3] { std::array::from_fn(|_| rng.random_range(0.0..=1.0)) };
        let c0 = color(rng);
        let palette = if family == Family::Solid {
            vec![c0]
        } else {
            let c1 = loop {
                let c = color(rng);
                let d: f32 = (0..3).map(|i| (c[i] - c0[i]).powi(2)).sum::<f32>().sqrt();
                if d >= MIN_PALETTE_CONTRAST {
                    break c;
                }
            };
            vec![c0, c1]
        };
        let cell = (family == Family::Checker).then(|| if rng.random_bool(0.5) { 4 } else { 8 });
        let seed = rng.random();
        Self::new(family, palette, cell, seed).expect("constructed valid")
    }
}

fn lerp(a: [f32; 3], b: [f32; 3], t: f32) -> [f32; 3] {
    std::array::from_fn(|i| a[i] + t * (b[i] - a[i]))
}

pub fn render_background(spec: &BackgroundSpec, res: usize) -> RgbImage {
    let p = &spec.palette;
    let mut img = RgbImage::zeros(res, res);
    match spec.family {
        Family::Solid => return RgbImage::filled(res, res, p[0]),
        Family::Gradient => {
            for y in 0..res {
                let t = if res > 1 { y as f32 / (res - 1) as f32 } else { 0.0 };
                let c = lerp(p[0], p[1], t);
                for x in 0..res {
                    img.pixel_mut(x, y).copy_from_slice(&c);
                }
            }
        }
        Family::Checker => {
            let cell = spec.cell.expect("validated");
            for y in 0..res {
                for x in 0..res {
                    let c = if (x / cell + y / cell) % 2 == 0 { p[0] } else { p[1] };
                    img.pixel_mut(x, y).copy_from_slice(&c);
                }
            }
        }
        Family::Noise => {
            let n = res / NOISE_SPACING + 2;
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let lattice: Vec<f32> = (0..n * n).map(|_| rng.random_range(0.0..=1.0)).collect();
            for y in 0..res {
                let fy = y as f32 / NOISE_SPACING as f32;
                let (y0, ty) = (fy.floor() as usize, fy.fract());
                for x in 0..res {
                    let fx = x as f32 / NOISE_SPACING as f32;
                    let (x0, tx) = (fx.floor() as usize, fx.fract());
                    let l = |i: usize, j: usize| lattice[j * n + i];
                    let top = l(x0, y0) * (1.0 - tx) + l(x0 + 1, y0) * tx;
                    let bot = l(x0, y0 + 1) * (1.0 - tx) + l(x0 + 1, y0 + 1) * tx;
                    let t = top * (1.0 - ty) + bot * ty;
                    img.pixel_mut(x, y).copy_from_slice(&lerp(p[0], p[1], t));
                }
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checker_phase() {
        let spec = BackgroundSpec::new(Family::Checker, vec![[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]], Some(8), 0).unwrap();
        let img = render_background(&spec, 32);
        assert_eq!(img.pixel(0, 0), &[1.0, 0.0, 0.0]);
        assert_eq!(img.pixel(8, 0), &[0.0, 0.0, 1.0]);
        assert_eq!(img.pixel(8, 8), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn spec_validation() {
        assert!(BackgroundSpec::new(Family::Solid, vec![[0.0; 3], [1.0; 3]], None, 0).is_err());
        assert!(BackgroundSpec::new(Family::Checker, vec![[0.0; 3], [1.0; 3]], None, 0).is_err());
        assert!(BackgroundSpec::new(Family::Gradient, vec![[0.0; 3], [1.0; 3]], Some(4), 0).is_err());
    }

    #[test]
    fn noise_is_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = BackgroundSpec::random(Family::Noise, &mut rng);
        assert_eq!(render_background(&spec, 32), render_background(&spec, 32));
    }
}
