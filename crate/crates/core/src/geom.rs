//! Planar geometry primitives shared by the simulator, sensors and planners.
//!
//! All transcendental functions go through `libm` so results do not depend on
//! the platform's math library.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    /// Unit vector at `angle` radians from the +x axis.
    pub fn from_angle(angle: f64) -> Self {
        Vec2::new(libm::cos(angle), libm::sin(angle))
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn length_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn length(self) -> f64 {
        libm::sqrt(self.length_sq())
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (o - self).length()
    }

    /// Normalized copy, or `None` for a zero-length vector.
    pub fn try_normalize(self) -> Option<Vec2> {
        let len = self.length();
        if len > 0.0 && len.is_finite() {
            Some(Vec2::new(self.x / len, self.y / len))
        } else {
            None
        }
    }

    /// Counterclockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn angle(self) -> f64 {
        libm::atan2(self.y, self.x)
    }

    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = (libm::sin(angle), libm::cos(angle));
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Expresses `self` in the frame whose x axis is the unit vector `axis`.
    pub fn to_frame(self, axis: Vec2) -> Vec2 {
        Vec2::new(self.dot(axis), axis.cross(self))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub const fn new(min: Vec2, max: Vec2) -> Self {
        Rect { min, max }
    }

    pub fn is_valid(&self) -> bool {
        self.min.is_finite() && self.max.is_finite() && self.min.x < self.max.x && self.min.y < self.max.y
    }

    pub fn center(&self) -> Vec2 {
        (self.min + self.max) * 0.5
    }

    pub fn inflate(&self, r: f64) -> Rect {
        Rect::new(self.min - Vec2::new(r, r), self.max + Vec2::new(r, r))
    }

    /// Strict interior test.
    pub fn contains_open(&self, p: Vec2) -> bool {
        p.x > self.min.x && p.x < self.max.x && p.y > self.min.y && p.y < self.max.y
    }

    pub fn contains_closed(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Euclidean distance from `p` to the closed rectangle (0 inside).
    pub fn distance_to(&self, p: Vec2) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        libm::sqrt(dx * dx + dy * dy)
    }

    pub fn overlaps(&self, o: &Rect) -> bool {
        self.min.x < o.max.x && o.min.x < self.max.x && self.min.y < o.max.y && o.min.y < self.max.y
    }

    /// Parametric interval `[t_enter, t_exit]` where the line `origin + t*dir`
    /// lies in the closed rectangle, or `None` when it misses.
    ///
    /// With `open` set, a line running exactly along an edge counts as a miss.
    pub fn clip_line(&self, origin: Vec2, dir: Vec2, open: bool) -> Option<(f64, f64)> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for (o, d, lo, hi) in [
            (origin.x, dir.x, self.min.x, self.max.x),
            (origin.y, dir.y, self.min.y, self.max.y),
        ] {
            if d == 0.0 {
                let inside = if open { o > lo && o < hi } else { o >= lo && o <= hi };
                if !inside {
                    return None;
                }
            } else {
                let a = (lo - o) / d;
                let b = (hi - o) / d;
                let (a, b) = if a <= b { (a, b) } else { (b, a) };
                t0 = t0.max(a);
                t1 = t1.min(b);
            }
        }
        if t0 <= t1 {
            Some((t0, t1))
        } else {
            None
        }
    }

    /// True when the segment `a -> b` passes through the open interior.
    pub fn segment_crosses_interior(&self, a: Vec2, b: Vec2) -> bool {
        let d = b - a;
        match self.clip_line(a, d, true) {
            Some((t0, t1)) => t0.max(0.0) < t1.min(1.0),
            None => false,
        }
    }

    /// First parameter `t in [0, 1]` at which segment `a -> b` touches the
    /// closed rectangle.
    pub fn segment_entry(&self, a: Vec2, b: Vec2) -> Option<f64> {
        let (t0, t1) = self.clip_line(a, b - a, false)?;
        let lo = t0.max(0.0);
        if lo <= t1.min(1.0) {
            Some(lo)
        } else {
            None
        }
    }

    /// Distance along a unit ray to the rectangle (0 when starting inside).
    pub fn ray_hit(&self, origin: Vec2, dir: Vec2, max_dist: f64) -> Option<f64> {
        let (t0, t1) = self.clip_line(origin, dir, false)?;
        if t1 < 0.0 {
            return None;
        }
        let t = t0.max(0.0);
        (t <= max_dist).then_some(t)
    }
}

/// Distance along a unit ray to a closed disc (0 when starting inside).
pub fn ray_circle(origin: Vec2, dir: Vec2, center: Vec2, radius: f64, max_dist: f64) -> Option<f64> {
    let m = origin - center;
    let c = m.length_sq() - radius * radius;
    if c <= 0.0 {
        return Some(0.0);
    }
    let b = m.dot(dir);
    if b > 0.0 {
        return None;
    }
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let t = -b - libm::sqrt(disc);
    (t <= max_dist).then_some(t.max(0.0))
}

/// First parameter `t in [0, 1]` at which segment `a -> b` touches a closed disc.
pub fn segment_circle(a: Vec2, b: Vec2, center: Vec2, radius: f64) -> Option<f64> {
    let d = b - a;
    let len = d.length();
    if len == 0.0 {
        return (a.distance(center) <= radius).then_some(0.0);
    }
    let dir = d * (1.0 / len);
    ray_circle(a, dir, center, radius, len).map(|t| (t / len).min(1.0))
}

/// Rotates unit vector `from` toward unit vector `to` by at most `max_angle`
/// radians; snaps exactly onto `to` when within reach.
pub fn slew_toward(from: Vec2, to: Vec2, max_angle: f64) -> Vec2 {
    let diff = libm::atan2(from.cross(to), from.dot(to));
    if diff.abs() <= max_angle {
        to
    } else {
        let r = from.rotate(max_angle.copysign(diff));
        r.try_normalize().unwrap_or(to)
    }
}
