//! Planar primitives: the counting line, the tracked region and directed
//! line-crossing tests.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Collinearity / degeneracy tolerance in pixels.
pub const EPS_GEOM: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("coordinate is not finite: ({0}, {1})")]
    NonFinite(f64, f64),
    #[error("segment endpoints coincide")]
    ZeroLength,
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon vertices {0} and {1} coincide")]
    RepeatedVertex(usize, usize),
    #[error("polygon edges {0} and {1} intersect")]
    SelfIntersecting(usize, usize),
}

/// A point (or displacement) in image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn try_new(x: f64, y: f64) -> Result<Self, GeometryError> {
        if x.is_finite() && y.is_finite() {
            Ok(Self { x, y })
        } else {
            Err(GeometryError::NonFinite(x, y))
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 2-D cross product.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }
}

impl fmt::Display for Point2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

// Points travel as `[x, y]` in every file format.
impl Serialize for Point2 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        [self.x, self.y].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Point2 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [x, y] = <[f64; 2]>::deserialize(deserializer)?;
        Point2::try_new(x, y).map_err(serde::de::Error::custom)
    }
}

/// A finite directed segment `a -> b` with `a != b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Segment {
    pub a: Point2,
    pub b: Point2,
}

impl Segment {
    pub fn new(a: Point2, b: Point2) -> Result<Self, GeometryError> {
        for p in [a, b] {
            if !p.is_finite() {
                return Err(GeometryError::NonFinite(p.x, p.y));
            }
        }
        if a.distance(b) <= EPS_GEOM {
            return Err(GeometryError::ZeroLength);
        }
        Ok(Self { a, b })
    }

    pub fn vector(&self) -> Point2 {
        self.b - self.a
    }

    pub fn length(&self) -> f64 {
        self.vector().norm()
    }

    /// Signed perpendicular distance of `p` from the infinite extension of
    /// the segment, positive on the left of `a -> b`.
    pub fn signed_distance(&self, p: Point2) -> f64 {
        self.vector().cross(p - self.a) / self.length()
    }

    fn distance_to_point(&self, p: Point2) -> f64 {
        let d = self.vector();
        let t = ((p - self.a).dot(d) / d.dot(d)).clamp(0.0, 1.0);
        p.distance(self.a + d * t)
    }
}

impl<'de> Deserialize<'de> for Segment {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            a: Point2,
            b: Point2,
        }
        let raw = Raw::deserialize(deserializer)?;
        Segment::new(raw.a, raw.b).map_err(serde::de::Error::custom)
    }
}

/// A simple (non-self-intersecting) polygon with at least three vertices.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Polygon {
    vertices: Vec<Point2>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point2>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GeometryError::TooFewVertices(n));
        }
        if let Some(p) = vertices.iter().find(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite(p.x, p.y));
        }
        for i in 0..n {
            let j = (i + 1) % n;
            if vertices[i].distance(vertices[j]) <= EPS_GEOM {
                return Err(GeometryError::RepeatedVertex(i, j));
            }
        }
        let edge = |i: usize| (vertices[i], vertices[(i + 1) % n]);
        for i in 0..n {
            for j in i + 1..n {
                // Adjacent edges share exactly one endpoint by construction.
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (p1, p2) = edge(i);
                let (q1, q2) = edge(j);
                if segments_touch(p1, p2, q1, q2) {
                    return Err(GeometryError::SelfIntersecting(i, j));
                }
            }
        }
        // Degenerate folds (an edge doubling back over its neighbour) are not
        // caught by the non-adjacent test above.
        for i in 0..n {
            let prev = vertices[(i + n - 1) % n];
            let cur = vertices[i];
            let next = vertices[(i + 1) % n];
            let u = cur - prev;
            let v = next - cur;
            if u.cross(v).abs() <= EPS_GEOM * u.norm() && u.dot(v) < 0.0 {
                return Err(GeometryError::SelfIntersecting((i + n - 1) % n, i));
            }
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bounding_box(&self) -> (Point2, Point2) {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for p in &self.vertices[1..] {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }
}

impl<'de> Deserialize<'de> for Polygon {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let vertices = Vec::<Point2>::deserialize(deserializer)?;
        Polygon::new(vertices).map_err(serde::de::Error::custom)
    }
}

/// A movement that crossed the counting line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingEvent {
    /// Side of the line the movement ended on (`-1` or `+1`).
    pub direction_sign: i8,
    pub intersection: Point2,
}

/// Side of `p` relative to the directed line: `+1` left, `-1` right, `0`
/// within [`EPS_GEOM`] of the infinite extension.
pub fn side_of_line(p: Point2, line: &Segment) -> i8 {
    let d = line.signed_distance(p);
    if d > EPS_GEOM {
        1
    } else if d < -EPS_GEOM {
        -1
    } else {
        0
    }
}

/// Crossing of the finite counting segment by the movement `prev -> curr`.
///
/// Fires only on a strict sign change; a position lying on the line never
/// produces an event by itself.
pub fn crossing(prev: Point2, curr: Point2, line: &Segment) -> Option<CrossingEvent> {
    let s_prev = side_of_line(prev, line);
    let s_curr = side_of_line(curr, line);
    if s_prev == 0 || s_curr == 0 || s_prev == s_curr {
        return None;
    }
    let d = line.vector();
    let m = curr - prev;
    let denom = d.cross(m);
    if denom == 0.0 {
        return None;
    }
    // Parameter along the counting segment where the movement meets it.
    let u = (prev - line.a).cross(m) / denom;
    let slack = EPS_GEOM / line.length();
    if !(-slack..=1.0 + slack).contains(&u) {
        return None;
    }
    Some(CrossingEvent {
        direction_sign: s_curr,
        intersection: line.a + d * u.clamp(0.0, 1.0),
    })
}

/// Even-odd membership; points on the boundary count as inside.
pub fn point_in_polygon(p: Point2, poly: &Polygon) -> bool {
    if poly
        .edges()
        .any(|(a, b)| Segment { a, b }.distance_to_point(p) <= EPS_GEOM)
    {
        return true;
    }
    let mut inside = false;
    for (a, b) in poly.edges() {
        if (a.y > p.y) != (b.y > p.y) {
            let x_at = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_at {
                inside = !inside;
            }
        }
    }
    inside
}

fn orient(a: Point2, b: Point2, c: Point2) -> i8 {
    let v = (b - a).cross(c - a);
    let scale = (b - a).norm().max(1.0);
    if v > EPS_GEOM * scale {
        1
    } else if v < -EPS_GEOM * scale {
        -1
    } else {
        0
    }
}

fn within_box(a: Point2, b: Point2, p: Point2) -> bool {
    p.x >= a.x.min(b.x) - EPS_GEOM
        && p.x <= a.x.max(b.x) + EPS_GEOM
        && p.y >= a.y.min(b.y) - EPS_GEOM
        && p.y <= a.y.max(b.y) + EPS_GEOM
}

/// Closed segment intersection test, touching included.
pub fn segments_touch(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool {
    let o1 = orient(p1, p2, q1);
    let o2 = orient(p1, p2, q2);
    let o3 = orient(q1, q2, p1);
    let o4 = orient(q1, q2, p2);
    if o1 != o2 && o3 != o4 && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0 {
        return true;
    }
    (o1 == 0 && within_box(p1, p2, q1))
        || (o2 == 0 && within_box(p1, p2, q2))
        || (o3 == 0 && within_box(q1, q2, p1))
        || (o4 == 0 && within_box(q1, q2, p2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn x_axis() -> Segment {
        Segment::new(Point2::new(0.0, 0.0), Point2::new(10.0, 0.0)).unwrap()
    }

    fn square() -> Polygon {
        Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(4.0, 0.0),
            Point2::new(4.0, 4.0),
            Point2::new(0.0, 4.0),
        ])
        .unwrap()
    }

    #[test]
    fn side_of_line_examples() {
        assert_eq!(side_of_line(Point2::new(5.0, 3.0), &x_axis()), 1);
        assert_eq!(side_of_line(Point2::new(5.0, -3.0), &x_axis()), -1);
        assert_eq!(side_of_line(Point2::new(5.0, 0.0), &x_axis()), 0);
        // Collinear beyond the finite extent still reads as on-line.
        assert_eq!(side_of_line(Point2::new(50.0, 0.0), &x_axis()), 0);
    }

    #[test]
    fn perpendicular_crossing() {
        let ev = crossing(Point2::new(5.0, -1.0), Point2::new(5.0, 1.0), &x_axis()).unwrap();
        assert_eq!(ev.direction_sign, 1);
        assert!(ev.intersection.distance(Point2::new(5.0, 0.0)) < 1e-12);
    }

    #[test]
    fn same_side_is_not_a_crossing() {
        assert!(crossing(Point2::new(5.0, 1.0), Point2::new(5.0, 3.0), &x_axis()).is_none());
    }

    /// Parametric two-segment solve, independent of the side-of-line path.
    fn param_intersection(p: Point2, q: Point2, a: Point2, b: Point2) -> Option<(f64, f64)> {
        let r = q - p;
        let s = b - a;
        let den = r.x * s.y - r.y * s.x;
        if den == 0.0 {
            return None;
        }
        let t = ((a.x - p.x) * s.y - (a.y - p.y) * s.x) / den;
        let u = ((a.x - p.x) * r.y - (a.y - p.y) * r.x) / den;
        Some((t, u))
    }

    #[test]
    fn movement_past_segment_end_misses() {
        let (t, u) = param_intersection(
            Point2::new(11.0, -1.0),
            Point2::new(11.0, 1.0),
            Point2::new(0.0, 0.0),
            Point2::new(10.0, 0.0),
        )
        .unwrap();
        // The infinite lines meet inside the movement but beyond the segment.
        assert!((0.0..=1.0).contains(&t));
        assert!(u > 1.0);
        assert!(crossing(Point2::new(11.0, -1.0), Point2::new(11.0, 1.0), &x_axis()).is_none());
    }

    #[test]
    fn starting_on_the_line_does_not_fire() {
        assert!(crossing(Point2::new(5.0, 0.0), Point2::new(5.0, 1.0), &x_axis()).is_none());
        assert!(crossing(Point2::new(5.0, -1.0), Point2::new(5.0, 0.0), &x_axis()).is_none());
    }

    #[test]
    fn polygon_membership_examples() {
        assert!(point_in_polygon(Point2::new(1.0, 1.0), &square()));
        assert!(!point_in_polygon(Point2::new(5.0, 5.0), &square()));
        assert!(point_in_polygon(Point2::new(4.0, 2.0), &square()));
        assert!(point_in_polygon(Point2::new(0.0, 0.0), &square()));
    }

    #[test]
    fn invalid_shapes_rejected() {
        assert_eq!(
            Segment::new(Point2::new(1.0, 1.0), Point2::new(1.0, 1.0)),
            Err(GeometryError::ZeroLength)
        );
        assert!(Point2::try_new(f64::NAN, 0.0).is_err());
        assert_eq!(
            Polygon::new(vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)]),
            Err(GeometryError::TooFewVertices(2))
        );
        // Bow-tie.
        let bow = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(4.0, 4.0),
            Point2::new(4.0, 0.0),
            Point2::new(0.0, 4.0),
        ]);
        assert!(matches!(bow, Err(GeometryError::SelfIntersecting(_, _))));
        let dup = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(0.0, 0.0),
            Point2::new(4.0, 0.0),
        ]);
        assert!(matches!(dup, Err(GeometryError::RepeatedVertex(0, 1))));
    }

    /// Brute-force half-plane oracle for counter-clockwise convex polygons.
    fn in_convex(p: Point2, verts: &[Point2]) -> bool {
        let n = verts.len();
        (0..n).all(|i| {
            let a = verts[i];
            let b = verts[(i + 1) % n];
            (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) >= 0.0
        })
    }

    fn quad() -> Vec<Point2> {
        vec![
            Point2::new(-3.0, -1.0),
            Point2::new(5.0, -4.0),
            Point2::new(7.0, 6.0),
            Point2::new(-2.0, 3.5),
        ]
    }

    #[test]
    fn convex_quad_matches_half_plane_oracle() {
        use rand_core::Rng;
        use rand_core::SeedableRng;
        let verts = quad();
        let poly = Polygon::new(verts.clone()).unwrap();
        let mut rng = rand_xoshiro::Xoshiro256StarStar::seed_from_u64(7);
        let mut unit = || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        for _ in 0..200 {
            let p = Point2::new(-5.0 + 14.0 * unit(), -6.0 + 14.0 * unit());
            assert_eq!(point_in_polygon(p, &poly), in_convex(p, &verts), "{p}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn point_in_convex_polygon_agrees_with_half_planes(x in -6.0f64..9.0, y in -6.0f64..8.0) {
            let verts = quad();
            let poly = Polygon::new(verts.clone()).unwrap();
            let p = Point2::new(x, y);
            prop_assert_eq!(point_in_polygon(p, &poly), in_convex(p, &verts));
        }
    }

    fn coord() -> impl Strategy<Value = f64> {
        -100.0f64..100.0
    }

    proptest! {
        #[test]
        fn side_is_antisymmetric(ax in coord(), ay in coord(), bx in coord(), by in coord(),
                                 px in coord(), py in coord()) {
            let (a, b, p) = (Point2::new(ax, ay), Point2::new(bx, by), Point2::new(px, py));
            prop_assume!(a.distance(b) > 1e-3);
            let fwd = Segment::new(a, b).unwrap();
            let back = Segment::new(b, a).unwrap();
            let s = side_of_line(p, &fwd);
            prop_assume!(s != 0);
            prop_assert_eq!(s, -side_of_line(p, &back));
        }

        #[test]
        fn crossing_is_reversible(px in coord(), py in coord(), qx in coord(), qy in coord()) {
            let line = Segment::new(Point2::new(-20.0, 3.0), Point2::new(40.0, -7.0)).unwrap();
            let (p, q) = (Point2::new(px, py), Point2::new(qx, qy));
            let fwd = crossing(p, q, &line);
            let back = crossing(q, p, &line);
            match (fwd, back) {
                (None, None) => {}
                (Some(f), Some(b)) => {
                    prop_assert_eq!(f.direction_sign, -b.direction_sign);
                    prop_assert_ne!(side_of_line(p, &line), side_of_line(q, &line));
                    let i = f.intersection;
                    let tol = 1e-6;
                    prop_assert!(i.x >= p.x.min(q.x) - tol && i.x <= p.x.max(q.x) + tol);
                    prop_assert!(i.y >= p.y.min(q.y) - tol && i.y <= p.y.max(q.y) + tol);
                    prop_assert!(i.x >= -20.0 - 1e-6 && i.x <= 40.0 + 1e-6);
                }
                _ => prop_assert!(false, "asymmetric crossing result"),
            }
        }
    }
}
