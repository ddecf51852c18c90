//! Planar geometry shared by the planner, the simulator and the rasterizer.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Rotates counter-clockwise by `theta`.
    pub fn rotate(self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Left-hand normal.
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl std::ops::Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut a = (theta + PI).rem_euclid(two_pi) - PI;
    // rem_euclid can return exactly two_pi for tiny negative inputs
    if a >= PI {
        a -= two_pi;
    }
    a
}

/// Interpolates between two headings along the shorter arc.
pub fn lerp_angle(from: f64, to: f64, frac: f64) -> f64 {
    let delta = wrap_angle(to - from);
    wrap_angle(from + delta * frac)
}

/// A rectangle with arbitrary heading. `length` runs along the heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Vec2,
    pub yaw: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedBox {
    pub fn new(center: Vec2, yaw: f64, length: f64, width: f64) -> Self {
        Self {
            center,
            yaw,
            length,
            width,
        }
    }

    pub fn axes(&self) -> (Vec2, Vec2) {
        let u = Vec2::from_angle(self.yaw);
        (u, u.perp())
    }

    pub fn half_extents(&self) -> (f64, f64) {
        (0.5 * self.length, 0.5 * self.width)
    }

    /// Radius of the circumscribed circle.
    pub fn bounding_radius(&self) -> f64 {
        0.5 * self.length.hypot(self.width)
    }

    pub fn corners(&self) -> [Vec2; 4] {
        let (u, v) = self.axes();
        let (hl, hw) = self.half_extents();
        let c = self.center;
        [
            c + u * hl + v * hw,
            c - u * hl + v * hw,
            c - u * hl - v * hw,
            c + u * hl - v * hw,
        ]
    }

    /// Euclidean distance from `p` to the box; zero when `p` is inside.
    pub fn distance_to_point(&self, p: Vec2) -> f64 {
        let (u, v) = self.axes();
        let rel = p - self.center;
        let (hl, hw) = self.half_extents();
        let dx = (rel.dot(u).abs() - hl).max(0.0);
        let dy = (rel.dot(v).abs() - hw).max(0.0);
        dx.hypot(dy)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let (u, v) = self.axes();
        let rel = p - self.center;
        let (hl, hw) = self.half_extents();
        rel.dot(u).abs() <= hl && rel.dot(v).abs() <= hw
    }

    /// Closed separating-axis overlap test: touching boxes overlap.
    pub fn overlaps(&self, other: &OrientedBox) -> bool {
        let (a_u, a_v) = self.axes();
        let (b_u, b_v) = other.axes();
        let a_c = self.corners();
        let b_c = other.corners();
        for axis in [a_u, a_v, b_u, b_v] {
            let (a_min, a_max) = project(&a_c, axis);
            let (b_min, b_max) = project(&b_c, axis);
            // small slack absorbs rounding in the corner construction
            let eps = 1e-9 * (1.0 + a_max.abs().max(b_max.abs()));
            if a_max < b_min - eps || b_max < a_min - eps {
                return false;
            }
        }
        true
    }
}

fn project(corners: &[Vec2; 4], axis: Vec2) -> (f64, f64) {
    corners
        .iter()
        .map(|c| c.dot(axis))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(x), hi.max(x))
        })
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

pub fn point_polyline_distance(p: Vec2, line: &[Vec2]) -> f64 {
    match line {
        [] => f64::INFINITY,
        [only] => p.dist(*only),
        _ => line
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

/// A rigid motion mapping world coordinates into the frame of a pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTransform {
    origin: Vec2,
    yaw: f64,
}

impl FrameTransform {
    /// Frame located at `origin` whose +x axis points along `yaw`.
    pub fn at(origin: Vec2, yaw: f64) -> Self {
        Self { origin, yaw }
    }

    pub fn point(&self, p: Vec2) -> Vec2 {
        (p - self.origin).rotate(-self.yaw)
    }

    pub fn heading(&self, yaw: f64) -> f64 {
        wrap_angle(yaw - self.yaw)
    }

    pub fn vector(&self, v: Vec2) -> Vec2 {
        v.rotate(-self.yaw)
    }
}
