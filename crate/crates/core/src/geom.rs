//! Shared geometric primitives and frame conventions.
//!
//! The world frame is right-handed with `+y` up. Ground objects live in the
//! `xz`-plane. Yaw is a rotation about `+y`; applying yaw `a` maps the local
//! `+x` axis to `(cos a, 0, -sin a)` and the local `+z` axis to
//! `(sin a, 0, cos a)`. Angles cross public APIs in degrees and are converted
//! to radians only at trigonometric call sites.

use core::ops::{Add, Mul, Neg, Sub};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

pub const DEG_TO_RAD: f64 = core::f64::consts::PI / 180.0;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

pub const fn vec3(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3 { x, y, z }
}

impl Vec3 {
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        vec3(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn length(self) -> f64 {
        libm::sqrt(self.dot(self))
    }

    pub fn normalized(self) -> Vec3 {
        let len = self.length();
        debug_assert!(len > 0.0);
        self * (1.0 / len)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        vec3(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        vec3(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        vec3(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        vec3(-self.x, -self.y, -self.z)
    }
}

/// Sine and cosine of an angle given in degrees.
#[inline]
pub fn sincos_deg(deg: f64) -> (f64, f64) {
    let rad = deg * DEG_TO_RAD;
    (libm::sin(rad), libm::cos(rad))
}

/// Rotates `v` about the `+y` axis by `yaw_deg`.
pub fn rotate_yaw(v: Vec3, yaw_deg: f64) -> Vec3 {
    let (s, c) = sincos_deg(yaw_deg);
    vec3(v.x * c + v.z * s, v.y, -v.x * s + v.z * c)
}

/// A planar pose in the ground plane: translation plus yaw.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Pose2 {
    pub x: f64,
    pub z: f64,
    pub yaw_deg: f64,
}

impl Pose2 {
    pub const IDENTITY: Pose2 = Pose2 { x: 0.0, z: 0.0, yaw_deg: 0.0 };

    /// Maps a point from the local frame into the world frame.
    pub fn to_world(self, p: Vec3) -> Vec3 {
        let r = rotate_yaw(p, self.yaw_deg);
        vec3(r.x + self.x, r.y, r.z + self.z)
    }

    /// Maps a world-frame point into the local frame.
    pub fn to_local(self, p: Vec3) -> Vec3 {
        rotate_yaw(vec3(p.x - self.x, p.y, p.z - self.z), -self.yaw_deg)
    }
}

/// An axis-height rectangle in the ground plane, rotated by yaw about its
/// center. Used for stack footprints and shelf decks.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct RotRect {
    pub cx: f64,
    pub cz: f64,
    pub half_w: f64,
    pub half_d: f64,
    pub yaw_deg: f64,
}

impl RotRect {
    /// Whether the ground point `(x, z)` lies inside the rectangle
    /// (boundary inclusive).
    pub fn contains(&self, x: f64, z: f64) -> bool {
        let (s, c) = sincos_deg(self.yaw_deg);
        let dx = x - self.cx;
        let dz = z - self.cz;
        let u = dx * c - dz * s;
        let w = dx * s + dz * c;
        u.abs() <= self.half_w && w.abs() <= self.half_d
    }

    /// The four corners in world coordinates, counterclockwise when viewed
    /// from above (looking along `-y`).
    pub fn corners(&self) -> [(f64, f64); 4] {
        let (s, c) = sincos_deg(self.yaw_deg);
        let local = [
            (self.half_w, self.half_d),
            (-self.half_w, self.half_d),
            (-self.half_w, -self.half_d),
            (self.half_w, -self.half_d),
        ];
        local.map(|(u, w)| (self.cx + u * c + w * s, self.cz - u * s + w * c))
    }

    /// Tight axis-aligned bounds of the rotated rectangle along `x`.
    pub fn x_extent(&self) -> (f64, f64) {
        let (s, c) = sincos_deg(self.yaw_deg);
        let r = self.half_w * c.abs() + self.half_d * s.abs();
        (self.cx - r, self.cx + r)
    }

    /// Tight axis-aligned bounds of the rotated rectangle along `z`.
    pub fn z_extent(&self) -> (f64, f64) {
        let (s, c) = sincos_deg(self.yaw_deg);
        let r = self.half_w * s.abs() + self.half_d * c.abs();
        (self.cz - r, self.cz + r)
    }
}

/// An oriented box: axis-aligned in `y`, rotated by yaw in the ground plane.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Obb {
    pub center: Vec3,
    /// Half-extents along the local `x`, `y`, `z` axes.
    pub half: Vec3,
    pub yaw_deg: f64,
}

impl Obb {
    /// Builds the box from a footprint and a vertical interval
    /// `[y_bottom, y_bottom + height]`.
    pub fn from_footprint(rect: RotRect, y_bottom: f64, height: f64) -> Obb {
        Obb {
            center: vec3(rect.cx, y_bottom + height * 0.5, rect.cz),
            half: vec3(rect.half_w, height * 0.5, rect.half_d),
            yaw_deg: rect.yaw_deg,
        }
    }

    /// Local-to-world rotation axes.
    pub fn axes(&self) -> [Vec3; 3] {
        let (s, c) = sincos_deg(self.yaw_deg);
        [vec3(c, 0.0, -s), vec3(0.0, 1.0, 0.0), vec3(s, 0.0, c)]
    }

    /// The eight corners; index bit `k` selects the sign of local axis `k`
    /// (bit 0 = x, bit 1 = y, bit 2 = z).
    pub fn corners(&self) -> [Vec3; 8] {
        let ax = self.axes();
        let mut out = [self.center; 8];
        for (i, corner) in out.iter_mut().enumerate() {
            let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
            *corner = self.center
                + ax[0] * (sx * self.half.x)
                + ax[1] * (sy * self.half.y)
                + ax[2] * (sz * self.half.z);
        }
        out
    }

    /// The box expressed in another frame's world coordinates.
    pub fn transformed(&self, pose: Pose2) -> Obb {
        Obb {
            center: pose.to_world(self.center),
            half: self.half,
            yaw_deg: self.yaw_deg + pose.yaw_deg,
        }
    }
}
