//! Spherical camera poses aimed at the object center.
//!
//! Convention: the polar angle `theta` is measured from world `+z`, the
//! azimuth `phi` from world `+x` towards `+y`. Cameras look at the origin
//! with the world `+z` axis, projected orthogonal to the viewing axis, as
//! the up direction. At the poles (`theta` of 0 or π) that projection
//! vanishes and world `+x` is used instead.
//!
//! The camera frame is right-handed with `x` right, `y` up and the camera
//! looking down its own `-z` axis.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Camera position on a sphere around the object.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct SphericalPose {
    theta: f64,
    phi: f64,
    radius: f64,
}

impl SphericalPose {
    pub fn new(theta: f64, phi: f64, radius: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&theta) {
            return Err(Error::invalid("theta", format!("{theta} outside [0, π]")));
        }
        if !(0.0..TAU).contains(&phi) {
            return Err(Error::invalid("phi", format!("{phi} outside [0, 2π)")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid("radius", format!("{radius} must be positive")));
        }
        Ok(Self { theta, phi, radius })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [
            self.radius * st * cp,
            self.radius * st * sp,
            self.radius * ct,
        ]
    }

    /// Applies relative offsets. The polar angle is clamped into
    /// `[theta_min, π - theta_min]`, the azimuth wraps and the radius is
    /// kept at or above `radius_min`.
    pub fn offset(
        &self,
        dtheta: f64,
        dphi: f64,
        dradius: f64,
        theta_min: f64,
        radius_min: f64,
    ) -> Self {
        Self {
            theta: (self.theta + dtheta).clamp(theta_min, PI - theta_min),
            phi: wrap_angle(self.phi + dphi),
            radius: (self.radius + dradius).max(radius_min),
        }
    }
}

impl TryFrom<[f64; 3]> for SphericalPose {
    type Error = Error;

    fn try_from(v: [f64; 3]) -> Result<Self> {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<SphericalPose> for [f64; 3] {
    fn from(p: SphericalPose) -> Self {
        [p.theta, p.phi, p.radius]
    }
}

/// Viewpoint change between two poses with the azimuth stored as a
/// sine/cosine pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativePose {
    pub dtheta: f64,
    pub sin_dphi: f64,
    pub cos_dphi: f64,
    pub dradius: f64,
}

impl RelativePose {
    pub const IDENTITY: Self = Self {
        dtheta: 0.0,
        sin_dphi: 0.0,
        cos_dphi: 1.0,
        dradius: 0.0,
    };

    pub fn from_deltas(dtheta: f64, dphi: f64, dradius: f64) -> Self {
        let (s, c) = wrap_angle(dphi).sin_cos();
        Self {
            dtheta,
            sin_dphi: s,
            cos_dphi: c,
            dradius,
        }
    }

    /// Builds from an embedded 4-vector, checking the unit-circle invariant.
    pub fn from_embedding(v: [f64; 4]) -> Result<Self> {
        let r = Self {
            dtheta: v[0],
            sin_dphi: v[1],
            cos_dphi: v[2],
            dradius: v[3],
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.sin_dphi * self.sin_dphi + self.cos_dphi * self.cos_dphi;
        if (n - 1.0).abs() > 1e-9 || !self.dtheta.is_finite() || !self.dradius.is_finite() {
            return Err(Error::invalid(
                "rel_pose",
                format!("sin²+cos² = {n}, expected 1"),
            ));
        }
        Ok(())
    }

    /// Azimuth change in `[0, 2π)`.
    pub fn dphi(&self) -> f64 {
        wrap_angle(self.sin_dphi.atan2(self.cos_dphi))
    }

    /// Absolute azimuth change folded into `[0, π]`.
    pub fn azimuth_distance(&self) -> f64 {
        let d = self.dphi();
        d.min(TAU - d)
    }
}

/// Viewpoint change taking `src` to `dst`.
pub fn relative_pose(src: &SphericalPose, dst: &SphericalPose) -> RelativePose {
    RelativePose::from_deltas(
        dst.theta - src.theta,
        dst.phi - src.phi,
        dst.radius - src.radius,
    )
}

/// The pose conditioning vector `[dtheta, sin dphi, cos dphi, dradius]`.
pub fn embed_pose(rel: &RelativePose) -> [f64; 4] {
    [rel.dtheta, rel.sin_dphi, rel.cos_dphi, rel.dradius]
}

/// World-to-camera transform: `x_cam = rotation · x_world + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extrinsics {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl Extrinsics {
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        std::array::from_fn(|i| dot(r[i], p) + self.translation[i])
    }

    /// Rotates a camera-frame direction into the world frame.
    pub fn to_world_dir(&self, d: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        std::array::from_fn(|j| (0..3).map(|i| r[i][j] * d[i]).sum())
    }

    /// Maps a camera-frame point back to world coordinates.
    pub fn to_world_point(&self, p: [f64; 3]) -> [f64; 3] {
        let q = sub(p, self.translation);
        self.to_world_dir(q)
    }
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Look-at extrinsics for a camera on the sphere aimed at the origin.
pub fn look_at_extrinsics(pose: &SphericalPose) -> Extrinsics {
    let center = pose.center();
    let forward = normalize([-center[0], -center[1], -center[2]]);
    let mut right = cross(forward, [0.0, 0.0, 1.0]);
    if dot(right, right).sqrt() < 1e-9 {
        right = cross(forward, [1.0, 0.0, 0.0]);
    }
    let right = normalize(right);
    let up = cross(right, forward);
    let back = [-forward[0], -forward[1], -forward[2]];
    let rotation = [right, up, back];
    let rc: [f64; 3] = std::array::from_fn(|i| dot(rotation[i], center));
    Extrinsics {
        rotation,
        translation: [-rc[0], -rc[1], -rc[2]],
    }
}
