//! Planar primitives: points, segments, convex polygons and oriented boxes.

use alloc::vec::Vec;
use core::ops::{Add, Mul, Neg, Sub};

use crate::math::{cos, hypot, sin};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(cos(theta), sin(theta))
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Self) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        hypot(self.x, self.y)
    }

    pub fn distance(self, other: Self) -> f64 {
        (self - other).norm()
    }

    /// Counter-clockwise normal.
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Distance from `p` to the closed segment `a`–`b`.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// Whether closed segments `a`–`b` and `c`–`d` share at least one point.
pub fn segments_intersect(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    fn orient(p: Vec2, q: Vec2, r: Vec2) -> f64 {
        (q - p).cross(r - p)
    }
    fn on_segment(p: Vec2, q: Vec2, r: Vec2) -> bool {
        r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
    }
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

/// A convex polygon with counter-clockwise vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Vec2>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum PolygonError {
    #[error("a polygon needs at least three vertices")]
    TooFewVertices,
    #[error("vertex is not finite")]
    NonFinite,
    #[error("polygon is not convex")]
    NotConvex,
    #[error("polygon has zero area")]
    Degenerate,
}

impl ConvexPolygon {
    /// Accepts vertices in either winding; stores them counter-clockwise.
    pub fn new(mut vertices: Vec<Vec2>) -> Result<Self, PolygonError> {
        if vertices.len() < 3 {
            return Err(PolygonError::TooFewVertices);
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(PolygonError::NonFinite);
        }
        let area = signed_area(&vertices);
        if area.abs() <= 1e-12 {
            return Err(PolygonError::Degenerate);
        }
        if area < 0.0 {
            vertices.reverse();
        }
        let n = vertices.len();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if (b - a).cross(c - b) < 0.0 {
                return Err(PolygonError::NotConvex);
            }
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Closed containment test.
    pub fn contains(&self, p: Vec2) -> bool {
        self.edges().all(|(a, b)| (b - a).cross(p - a) >= 0.0)
    }

    /// Whether the open segment `a`–`b` meets the closed polygon.
    ///
    /// Cyrus–Beck clipping against each edge's half-plane.
    pub fn intersects_open_segment(&self, a: Vec2, b: Vec2) -> bool {
        let dir = b - a;
        let mut t_in = 0.0_f64;
        let mut t_out = 1.0_f64;
        for (p, q) in self.edges() {
            let edge = q - p;
            // inside when edge.cross(x - p) >= 0
            let num = edge.cross(a - p);
            let den = edge.cross(dir);
            if den == 0.0 {
                if num < 0.0 {
                    return false;
                }
                continue;
            }
            let t = -num / den;
            if den > 0.0 {
                t_in = t_in.max(t);
            } else {
                t_out = t_out.min(t);
            }
            if t_in > t_out {
                return false;
            }
        }
        // Reject contact only at the endpoints themselves.
        t_out > 0.0 && t_in < 1.0 && t_in <= t_out
    }
}

impl ConvexPolygon {
    fn project(&self, axis: Vec2) -> (f64, f64) {
        self.vertices
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                let d = v.dot(axis);
                (lo.min(d), hi.max(d))
            })
    }

    /// Whether the interiors of two convex polygons overlap. Touching edges
    /// do not count.
    pub fn overlaps_interior(&self, other: &ConvexPolygon) -> bool {
        let axes = self.edges().chain(other.edges()).map(|(a, b)| (b - a).perp());
        for axis in axes {
            let (a_lo, a_hi) = self.project(axis);
            let (b_lo, b_hi) = other.project(axis);
            if a_hi <= b_lo || b_hi <= a_lo {
                return false;
            }
        }
        true
    }
}

fn signed_area(vertices: &[Vec2]) -> f64 {
    let n = vertices.len();
    let mut acc = 0.0;
    for i in 0..n {
        acc += vertices[i].cross(vertices[(i + 1) % n]);
    }
    0.5 * acc
}

/// An oriented rectangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedBox {
    pub center: Vec2,
    /// Unit vector along the long axis.
    pub axis: Vec2,
    pub half_length: f64,
    pub half_width: f64,
}

impl OrientedBox {
    pub fn corners(&self) -> [Vec2; 4] {
        let l = self.axis * self.half_length;
        let w = self.axis.perp() * self.half_width;
        [
            self.center + l + w,
            self.center - l + w,
            self.center - l - w,
            self.center + l - w,
        ]
    }

    fn projection_radius(&self, onto: Vec2) -> f64 {
        self.half_length * self.axis.dot(onto).abs() + self.half_width * self.axis.perp().dot(onto).abs()
    }

    /// Separating-axis overlap test; touching boxes count as overlapping.
    pub fn overlaps(&self, other: &OrientedBox) -> bool {
        let d = other.center - self.center;
        let axes = [self.axis, self.axis.perp(), other.axis, other.axis.perp()];
        axes.iter()
            .all(|&n| d.dot(n).abs() <= self.projection_radius(n) + other.projection_radius(n))
    }

    /// Closed containment test.
    pub fn contains(&self, p: Vec2) -> bool {
        let d = p - self.center;
        d.dot(self.axis).abs() <= self.half_length && d.dot(self.axis.perp()).abs() <= self.half_width
    }

    /// Euclidean gap between two boxes, zero when they overlap.
    pub fn distance(&self, other: &OrientedBox) -> f64 {
        if self.overlaps(other) {
            return 0.0;
        }
        let a = self.corners();
        let b = other.corners();
        let mut best = f64::INFINITY;
        for i in 0..4 {
            let (p, q) = (a[i], a[(i + 1) % 4]);
            let (r, s) = (b[i], b[(i + 1) % 4]);
            for &c in &b {
                best = best.min(point_segment_distance(c, p, q));
            }
            for &c in &a {
                best = best.min(point_segment_distance(c, r, s));
            }
        }
        best
    }
}

/// Points of a circular arc, excluding the start point, at most `spacing` apart.
pub(crate) fn arc_points(center: Vec2, radius: f64, start_angle: f64, sweep: f64, spacing: f64) -> Vec<Vec2> {
    let arc_len = radius * sweep.abs();
    let n = crate::math::ceil(arc_len / spacing).max(1.0) as usize;
    (1..=n)
        .map(|k| {
            let a = start_angle + sweep * (k as f64 / n as f64);
            center + Vec2::from_angle(a) * radius
        })
        .collect()
}

/// Points of a straight segment, excluding `a`, at most `spacing` apart.
pub(crate) fn line_points(a: Vec2, b: Vec2, spacing: f64) -> Vec<Vec2> {
    let len = a.distance(b);
    let n = crate::math::ceil(len / spacing).max(1.0) as usize;
    (1..=n).map(|k| a + (b - a) * (k as f64 / n as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn square(x0: f64, y0: f64, x1: f64, y1: f64) -> ConvexPolygon {
        ConvexPolygon::new(vec![
            Vec2::new(x0, y0),
            Vec2::new(x1, y0),
            Vec2::new(x1, y1),
            Vec2::new(x0, y1),
        ])
        .unwrap()
    }

    #[test]
    fn polygon_validation() {
        assert_eq!(
            ConvexPolygon::new(vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)]),
            Err(PolygonError::TooFewVertices)
        );
        assert_eq!(
            ConvexPolygon::new(vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(2.0, 0.0)]),
            Err(PolygonError::Degenerate)
        );
        let dart = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(1.0, 0.5),
            Vec2::new(1.0, 2.0),
        ];
        assert_eq!(ConvexPolygon::new(dart), Err(PolygonError::NotConvex));
        // clockwise input is flipped
        let cw = ConvexPolygon::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
        ])
        .unwrap();
        assert!(cw.area() > 0.0);
    }

    #[test]
    fn segment_clipping() {
        let sq = square(4.0, -1.0, 6.0, 1.0);
        let o = Vec2::new(0.0, 0.0);
        assert!(sq.intersects_open_segment(o, Vec2::new(10.0, 0.0)));
        assert!(!sq.intersects_open_segment(o, Vec2::new(3.0, 0.0)));
        assert!(!square(4.0, 0.5, 6.0, 2.5).intersects_open_segment(o, Vec2::new(10.0, 0.0)));
        // segment ending inside the polygon
        assert!(sq.intersects_open_segment(o, Vec2::new(5.0, 0.0)));
    }

    #[test]
    fn box_distance_and_overlap() {
        let a = OrientedBox {
            center: Vec2::new(0.0, 0.0),
            axis: Vec2::new(1.0, 0.0),
            half_length: 1.0,
            half_width: 0.5,
        };
        let mut b = a;
        b.center = Vec2::new(5.0, 0.0);
        assert!(!a.overlaps(&b));
        assert!((a.distance(&b) - 3.0).abs() < 1e-12);
        b.center = Vec2::new(2.0, 0.0);
        assert!(a.overlaps(&b));
        assert_eq!(a.distance(&b), 0.0);
    }
}
