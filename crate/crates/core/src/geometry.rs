//! Planar geometry shared by the simulator, the candidate sampler and the metrics.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Serialized as a two-element array `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self { x: c, y: s }
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
        self.dot(self)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Unit vector, or zero for a (near) zero input.
    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n < 1e-12 {
            Vec2::ZERO
        } else {
            self * (1.0 / n)
        }
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotate(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn lerp(self, o: Vec2, t: f64) -> Vec2 {
        self + (o - self) * t
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(p: [f64; 2]) -> Self {
        Vec2::new(p[0], p[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(p: Vec2) -> Self {
        [p.x, p.y]
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

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    let mut a = theta.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// A rigid 2D transform: rotate by `theta`, then translate by `offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub theta: f64,
    pub offset: Vec2,
}

impl RigidTransform {
    pub fn apply(&self, p: Vec2) -> Vec2 {
        p.rotate(self.theta) + self.offset
    }
}

/// Result of projecting a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the foot point. May be negative / exceed the length when the
    /// point lies beyond an end (the end segments are extended).
    pub s: f64,
    /// Signed lateral offset, positive to the left of the travel direction.
    pub lateral: f64,
    pub segment: usize,
}

/// Polyline with cached cumulative arc lengths. Zero-length segments are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Vec2>,
    cum: Vec<f64>,
}

impl Polyline {
    /// Returns `None` when fewer than two distinct points remain.
    pub fn new(points: &[Vec2]) -> Option<Self> {
        let mut pts: Vec<Vec2> = Vec::with_capacity(points.len());
        for &p in points {
            if pts.last().is_none_or(|q: &Vec2| q.dist(p) > 1e-9) {
                pts.push(p);
            }
        }
        if pts.len() < 2 {
            return None;
        }
        let mut cum = Vec::with_capacity(pts.len());
        cum.push(0.0);
        for w in pts.windows(2) {
            let last = *cum.last().unwrap();
            cum.push(last + w[0].dist(w[1]));
        }
        Some(Self { points: pts, cum })
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    fn segment_dir(&self, i: usize) -> Vec2 {
        (self.points[i + 1] - self.points[i]).normalized()
    }

    fn segment_at(&self, s: f64) -> usize {
        let n = self.points.len() - 1;
        match self.cum.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
            Ok(i) => i.min(n - 1),
            Err(i) => i.saturating_sub(1).min(n - 1),
        }
    }

    /// Point at arc length `s`; beyond the ends the first/last segment is extended.
    pub fn point_at(&self, s: f64) -> Vec2 {
        let i = self.segment_at(s);
        self.points[i] + self.segment_dir(i) * (s - self.cum[i])
    }

    /// Unit tangent at arc length `s`.
    pub fn tangent_at(&self, s: f64) -> Vec2 {
        self.segment_dir(self.segment_at(s))
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        self.tangent_at(s).angle()
    }

    /// Nearest-point projection. Ties resolve to the earliest segment.
    pub fn project(&self, p: Vec2) -> Projection {
        let n = self.points.len() - 1;
        let mut best = (f64::INFINITY, 0usize, 0.0f64);
        for i in 0..n {
            let a = self.points[i];
            let seg = self.points[i + 1] - a;
            let len = self.cum[i + 1] - self.cum[i];
            let mut t = (p - a).dot(seg) / (len * len);
            if i > 0 {
                t = t.max(0.0);
            }
            if i + 1 < n {
                t = t.min(1.0);
            }
            let foot = a + seg * t;
            let d = foot.dist(p);
            if d < best.0 - 1e-12 {
                best = (d, i, t * len);
            }
        }
        let (_, i, along) = best;
        let dir = self.segment_dir(i);
        let lateral = dir.cross(p - self.points[i]);
        Projection {
            s: self.cum[i] + along,
            lateral,
            segment: i,
        }
    }

    /// Resamples the polyline from arc length `from` onward at fixed spacing.
    pub fn resample_from(&self, from: f64, spacing: f64) -> Vec<Vec2> {
        let end = self.length();
        let mut out = Vec::new();
        let mut s = from;
        while s < end {
            out.push(self.point_at(s));
            s += spacing;
        }
        out.push(self.point_at(end.max(from)));
        out
    }
}

/// Even-odd containment against a set of closed polygons (first point repeated last or not).
pub fn point_in_polygons(p: Vec2, polygons: &[Vec<Vec2>]) -> bool {
    let mut inside = false;
    for poly in polygons {
        let n = poly.len();
        if n < 3 {
            continue;
        }
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (poly[i], poly[j]);
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
            j = i;
        }
    }
    inside
}

/// Distance from `p` to the segment `a`-`b`.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq < 1e-18 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

/// Distance from `p` to the nearest edge of any polygon.
pub fn distance_to_edges(p: Vec2, polygons: &[Vec<Vec2>]) -> f64 {
    let mut best = f64::INFINITY;
    for poly in polygons {
        for w in poly.windows(2) {
            best = best.min(point_segment_distance(p, w[0], w[1]));
        }
        if let (Some(&first), Some(&last)) = (poly.first(), poly.last()) {
            best = best.min(point_segment_distance(p, last, first));
        }
    }
    best
}

/// Menger curvature of three consecutive points; `None` if either displacement is degenerate.
pub fn menger_curvature(p0: Vec2, p1: Vec2, p2: Vec2) -> Option<f64> {
    let u = p1 - p0;
    let w = p2 - p1;
    let (nu, nw) = (u.norm(), w.norm());
    if nu < 1e-6 || nw < 1e-6 {
        return None;
    }
    let nuw = (p2 - p0).norm();
    if nuw < 1e-12 {
        return None;
    }
    Some(2.0 * u.cross(w).abs() / (nu * nw * nuw))
}

/// Cubic Hermite curve sampled with `n` points (inclusive of both ends).
pub fn hermite(p0: Vec2, t0: Vec2, p1: Vec2, t1: Vec2, n: usize) -> Vec<Vec2> {
    (0..n)
        .map(|i| {
            let u = i as f64 / (n - 1) as f64;
            let u2 = u * u;
            let u3 = u2 * u;
            let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
            let h10 = u3 - 2.0 * u2 + u;
            let h01 = -2.0 * u3 + 3.0 * u2;
            let h11 = u3 - u2;
            p0 * h00 + t0 * h10 + p1 * h01 + t1 * h11
        })
        .collect()
}
