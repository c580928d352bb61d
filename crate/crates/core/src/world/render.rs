//! Orthographic software rasterizer for primitive solids.
//!
//! Each pixel casts a ray parallel to the optical axis through a 4×4 grid
//! of sub-pixel positions. Magnification is `focal · res / radius` pixels
//! per world unit, so moving the camera away shrinks the object as a
//! perspective camera would, while silhouettes stay exact orthographic
//! projections.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::image::RgbaImage;
use crate::camera::{dot, look_at_extrinsics, normalize, SphericalPose};
use crate::error::{Error, Result};

pub const MIN_RESOLUTION: usize = 16;
pub const FOCAL: f64 = 0.8;
pub const SUPERSAMPLE: usize = 4;
pub const AMBIENT: f64 = 0.3;
/// Darkening factor for the marker quadrant.
pub const MARKER_SHADE: f32 = 0.3;

/// Light direction in the camera frame (towards the light).
const LIGHT: [f64; 3] = [0.40, 0.55, 0.73];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Cube,
    Sphere,
    Pyramid,
    Cylinder,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Cube, Shape::Sphere, Shape::Pyramid, Shape::Cylinder];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Cube => "cube",
            Shape::Sphere => "sphere",
            Shape::Pyramid => "pyramid",
            Shape::Cylinder => "cylinder",
        }
    }
}

/// A solid centered at the world origin with its axis along `+z`.
///
/// `scale` is the half-extent: cube half-side, sphere radius, cylinder
/// radius and half-height, pyramid base half-side. One azimuthal quadrant
/// of the surface (picked by `seed`) is darkened so that rotations about
/// the vertical axis are visible even for symmetric shapes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveObject {
    pub shape: Shape,
    pub albedo: [f32; 3],
    pub scale: f64,
    pub seed: u64,
}

impl PrimitiveObject {
    pub fn new(shape: Shape, albedo: [f32; 3], scale: f64, seed: u64) -> Result<Self> {
        if albedo.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid("albedo", format!("{albedo:?} outside [0, 1]")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid("scale", format!("{scale} must be positive")));
        }
        Ok(Self {
            shape,
            albedo,
            scale,
            seed,
        })
    }

    /// Marker quadrant index in `0..4`.
    pub fn marker_quadrant(&self) -> usize {
        (self.seed % 4) as usize
    }

    fn marker_albedo(&self, p: [f64; 3]) -> [f32; 3] {
        let az = p[1].atan2(p[0]).rem_euclid(std::f64::consts::TAU);
        let q = ((az / std::f64::consts::FRAC_PI_2) as usize).min(3);
        if q == self.marker_quadrant() {
            self.albedo.map(|c| c * MARKER_SHADE)
        } else {
            self.albedo
        }
    }

    /// Ray/solid intersection: entry distance and outward world normal.
    fn intersect(&self, o: [f64; 3], d: [f64; 3]) -> Option<(f64, [f64; 3])> {
        let s = self.scale;
        match self.shape {
            Shape::Sphere => {
                let b = dot(o, d);
                let c = dot(o, o) - s * s;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let t = -b - disc.sqrt();
                let p = add_scaled(o, d, t);
                Some((t, normalize(p)))
            }
            Shape::Cube => {
                let planes = [
                    ([1.0, 0.0, 0.0], s),
                    ([-1.0, 0.0, 0.0], s),
                    ([0.0, 1.0, 0.0], s),
                    ([0.0, -1.0, 0.0], s),
                    ([0.0, 0.0, 1.0], s),
                    ([0.0, 0.0, -1.0], s),
                ];
                intersect_polytope(&planes, o, d)
            }
            Shape::Pyramid => {
                let (base, apex) = pyramid_extent(s);
                let h = base + apex;
                // side planes through the apex and one base edge
                let side = |nx: f64, ny: f64| {
                    let n = normalize([nx * h, ny * h, s]);
                    (n, dot(n, [0.0, 0.0, apex]))
                };
                let planes = [
                    ([0.0, 0.0, -1.0], base),
                    side(1.0, 0.0),
                    side(-1.0, 0.0),
                    side(0.0, 1.0),
                    side(0.0, -1.0),
                ];
                intersect_polytope(&planes, o, d)
            }
            Shape::Cylinder => {
                // slab |z| <= s intersected with the infinite cylinder
                let (mut t0, mut t1, mut n0) = (f64::NEG_INFINITY, f64::INFINITY, [0.0; 3]);
                if d[2].abs() < 1e-12 {
                    if o[2].abs() > s {
                        return None;
                    }
                } else {
                    let ta = (s - o[2]) / d[2];
                    let tb = (-s - o[2]) / d[2];
                    let (lo, hi) = if ta < tb { (ta, tb) } else { (tb, ta) };
                    t0 = lo;
                    t1 = hi;
                    n0 = [0.0, 0.0, -d[2].signum()];
                }
                let a = d[0] * d[0] + d[1] * d[1];
                let b = o[0] * d[0] + o[1] * d[1];
                let c = o[0] * o[0] + o[1] * o[1] - s * s;
                if a < 1e-12 {
                    if c > 0.0 {
                        return None;
                    }
                } else {
                    let disc = b * b - a * c;
                    if disc < 0.0 {
                        return None;
                    }
                    let r = disc.sqrt();
                    let lo = (-b - r) / a;
                    let hi = (-b + r) / a;
                    if lo > t0 {
                        t0 = lo;
                        let p = add_scaled(o, d, lo);
                        n0 = normalize([p[0], p[1], 0.0]);
                    }
                    t1 = t1.min(hi);
                }
                (t0 <= t1).then_some((t0, n0))
            }
        }
    }
}

/// Pyramid base depth below and apex height above the origin. The split
/// keeps the silhouette centroid near the image center over the sampled
/// polar range (worst case about 1.7 px at 32 px).
fn pyramid_extent(s: f64) -> (f64, f64) {
    (0.5 * s, 1.5 * s)
}

fn add_scaled(o: [f64; 3], d: [f64; 3], t: f64) -> [f64; 3] {
    [o[0] + t * d[0], o[1] + t * d[1], o[2] + t * d[2]]
}

/// Intersects a ray with `{p : n·p <= c}` for every plane `(n, c)`.
fn intersect_polytope(planes: &[([f64; 3], f64)], o: [f64; 3], d: [f64; 3]) -> Option<(f64, [f64; 3])> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    let mut normal = [0.0; 3];
    for &(n, c) in planes {
        let dn = dot(n, d);
        let dist = c - dot(n, o);
        if dn.abs() < 1e-12 {
            if dist < 0.0 {
                return None;
            }
        } else if dn < 0.0 {
            let t = dist / dn;
            if t > t0 {
                t0 = t;
                normal = n;
            }
        } else {
            t1 = t1.min(dist / dn);
        }
    }
    (t0 <= t1).then_some((t0, normal))
}

/// Pixels per world unit at the given camera distance.
pub fn magnification(res: usize, radius: f64) -> f64 {
    FOCAL * res as f64 / radius
}

/// Renders a premultiplied RGBA image of `obj` seen from `pose`.
pub fn render_object(obj: &PrimitiveObject, pose: &SphericalPose, res: usize) -> Result<RgbaImage> {
    if res < MIN_RESOLUTION {
        return Err(Error::invalid(
            "res",
            format!("{res} below minimum {MIN_RESOLUTION}"),
        ));
    }
    let ext = look_at_extrinsics(pose);
    let m = magnification(res, pose.radius());
    let dir = ext.to_world_dir([0.0, 0.0, -1.0]);
    let light = normalize(LIGHT);
    let half = res as f64 / 2.0;
    let ss = SUPERSAMPLE;
    let inv = 1.0 / (ss * ss) as f32;
    let mut img = RgbaImage::zeros(res, res);
    for py in 0..res {
        for px in 0..res {
            let mut acc = [0.0f32; 4];
            for sy in 0..ss {
                for sx in 0..ss {
                    let u = (px as f64 + (sx as f64 + 0.5) / ss as f64 - half) / m;
                    let v = (half - (py as f64 + (sy as f64 + 0.5) / ss as f64)) / m;
                    let origin = ext.to_world_point([u, v, 0.0]);
                    if let Some((t, n)) = obj.intersect(origin, dir) {
                        let hit = add_scaled(origin, dir, t);
                        let n_cam = ext_rotate(&ext.rotation, n);
                        let shade = (AMBIENT + (1.0 - AMBIENT) * dot(n_cam, light).max(0.0)) as f32;
                        let albedo = obj.marker_albedo(hit);
                        for c in 0..3 {
                            acc[c] += albedo[c] * shade;
                        }
                        acc[3] += 1.0;
                    }
                }
            }
            let out = img.pixel_mut(px, py);
            for c in 0..4 {
                out[c] = acc[c] * inv;
            }
        }
    }
    Ok(img)
}

fn ext_rotate(r: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [dot(r[0], v), dot(r[1], v), dot(r[2], v)]
}

/// Ranges for random objects and viewpoints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldRanges {
    pub scale_min: f64,
    pub scale_max: f64,
    pub radius_min: f64,
    pub radius_max: f64,
    /// Polar angles are drawn from `[theta_min, π - theta_min]`.
    pub theta_min: f64,
    /// Per-channel albedo jitter around the named palette colors.
    pub albedo_jitter: f32,
}

impl Default for WorldRanges {
    fn default() -> Self {
        Self {
            scale_min: 0.35,
            scale_max: 0.5,
            radius_min: 1.5,
            radius_max: 2.0,
            theta_min: std::f64::consts::FRAC_PI_4,
            albedo_jitter: 0.06,
        }
    }
}

impl WorldRanges {
    pub fn sample_pose<R: Rng + ?Sized>(&self, rng: &mut R) -> SphericalPose {
        let theta = rng.random_range(self.theta_min..=std::f64::consts::PI - self.theta_min);
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let radius = rng.random_range(self.radius_min..=self.radius_max);
        SphericalPose::new(theta, phi, radius).expect("ranges produce valid poses")
    }

    pub fn sample_object<R: Rng + ?Sized>(&self, rng: &mut R) -> PrimitiveObject {
        let shape = Shape::ALL[rng.random_range(0..4)];
        let color = super::caption::Color::ALL[rng.random_range(0..super::caption::Color::ALL.len())];
        let j = self.albedo_jitter;
        let albedo = color.rgb().map(|c| (c + rng.random_range(-j..=j)).clamp(0.0, 1.0));
        let scale = rng.random_range(self.scale_min..=self.scale_max);
        let seed = rng.random();
        PrimitiveObject {
            shape,
            albedo,
            scale,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn obj(shape: Shape) -> PrimitiveObject {
        PrimitiveObject::new(shape, [0.8, 0.2, 0.2], 0.5, 7).unwrap()
    }

    #[test]
    fn rejects_small_resolution() {
        let p = SphericalPose::new(1.0, 0.0, 1.6).unwrap();
        assert!(render_object(&obj(Shape::Cube), &p, 15).is_err());
    }

    #[test]
    fn sphere_alpha_invariant_to_azimuth() {
        let o = obj(Shape::Sphere);
        let a = render_object(&o, &SphericalPose::new(1.1, 0.3, 1.7).unwrap(), 32).unwrap();
        let b = render_object(&o, &SphericalPose::new(1.1, 4.0, 1.7).unwrap(), 32).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                assert_eq!(a.alpha(x, y), b.alpha(x, y));
            }
        }
    }

    #[test]
    fn side_view_cube_is_square() {
        let img = render_object(&obj(Shape::Cube), &SphericalPose::new(PI / 2.0, 0.0, 1.6).unwrap(), 32).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                let inside = (8..24).contains(&x) && (8..24).contains(&y);
                assert_eq!(img.alpha(x, y), if inside { 1.0 } else { 0.0 }, "({x},{y})");
            }
        }
    }
}
