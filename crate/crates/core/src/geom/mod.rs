//! Geometric primitives shared by every stage: points, quads, chain
//! polygons, annotations, and the polygon algorithms built on them.
//!
//! Coordinates are image pixels with +x right and +y down. In that frame a
//! clockwise outline (as seen on screen) has a *positive* shoelace sum, so
//! "clockwise" below always means `signed_area > 0`.

mod clip;
mod hull;
mod raster;

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use clip::{convex_intersection_area, quad_iou};
pub use hull::{convex_hull, min_enclosing_quad};
pub use raster::{fill_polygon, polygon_iou, raster_area, DEFAULT_IOU_SCALE};

const AREA_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 2-D cross product.
    #[inline]
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn normalized(self) -> Option<Point> {
        let n = self.norm();
        (n > 1e-12).then(|| self * (1.0 / n))
    }

    /// Counter-clockwise rotation by `theta` radians about `center`
    /// (as seen with +y up; on screen it turns clockwise).
    pub fn rotate_about(self, center: Point, theta: f64) -> Point {
        let (s, c) = theta.sin_cos();
        let d = self - center;
        center + Point::new(d.x * c - d.y * s, d.x * s + d.y * c)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn lerp(self, o: Point, t: f64) -> Point {
        self + (o - self) * t
    }
}

impl Add for Point {
    type Output = Point;
    #[inline]
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    #[inline]
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    #[inline]
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

impl Neg for Point {
    type Output = Point;
    #[inline]
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Shoelace sum of a closed outline; positive for clockwise-on-screen order.
pub fn signed_area(pts: &[Point]) -> f64 {
    let n = pts.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        acc += pts[i].cross(pts[(i + 1) % n]);
    }
    0.5 * acc
}

/// Absolute area in px² of a closed outline.
pub fn polygon_area(pts: &[Point]) -> Result<f64> {
    if pts.len() < 3 {
        return Err(Error::InvalidPolygon(format!("area needs at least 3 points, got {}", pts.len())));
    }
    Ok(signed_area(pts).abs())
}

pub fn centroid_of(pts: &[Point]) -> Point {
    let k = 1.0 / pts.len().max(1) as f64;
    pts.iter().fold(Point::default(), |acc, &p| acc + p) * k
}

/// Even-odd point-in-polygon test. Points exactly on the boundary may fall
/// either way; callers that care use [`distance_to_outline`].
pub fn contains_point(pts: &[Point], p: Point) -> bool {
    let n = pts.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (pts[i], pts[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

pub fn distance_to_segment(p: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 <= f64::EPSILON {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

/// Distance from `p` to an open polyline.
pub fn distance_to_polyline(p: Point, pts: &[Point]) -> f64 {
    pts.windows(2).map(|w| distance_to_segment(p, w[0], w[1])).fold(f64::INFINITY, f64::min)
}

/// Distance from `p` to the closed outline.
pub fn distance_to_outline(p: Point, pts: &[Point]) -> f64 {
    let n = pts.len();
    (0..n).map(|i| distance_to_segment(p, pts[i], pts[(i + 1) % n])).fold(f64::INFINITY, f64::min)
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) - 1e-12 && p.x <= a.x.max(b.x) + 1e-12 && p.y >= a.y.min(b.y) - 1e-12 && p.y <= a.y.max(b.y) + 1e-12
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let scale = (b - a).norm().max((d - c).norm()).max(1.0);
    let eps = 1e-12 * scale * scale;
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > eps && d2 < -eps) || (d1 < -eps && d2 > eps)) && ((d3 > eps && d4 < -eps) || (d3 < -eps && d4 > eps)) {
        return true;
    }
    (d1.abs() <= eps && on_segment(c, d, a))
        || (d2.abs() <= eps && on_segment(c, d, b))
        || (d3.abs() <= eps && on_segment(a, b, c))
        || (d4.abs() <= eps && on_segment(a, b, d))
}

/// True when no two non-adjacent edges of the closed outline touch.
pub fn is_simple(pts: &[Point]) -> bool {
    let n = pts.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        for j in i + 1..n {
            // adjacent edges share a vertex by construction
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (c, d) = (pts[j], pts[(j + 1) % n]);
            if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

/// A clockwise quadrilateral.
///
/// `v[0]` is the top-left corner: for quads derived from a text chain it is
/// the start of the top edge, and for free-standing quads (see
/// [`Quad::canonical`]) it is the vertex minimizing `x + y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quad {
    pub v: [Point; 4],
}

impl Quad {
    /// Builds a quad from vertices already in clockwise order starting at the
    /// top-left corner (top edge `v0 v1`, bottom edge `v3 v2`).
    pub fn from_chain(v: [Point; 4]) -> Result<Self> {
        let q = Quad { v };
        q.validate()?;
        Ok(q)
    }

    /// Builds a quad from four vertices in either rotational direction,
    /// orienting it clockwise and starting at the vertex with the smallest
    /// `x + y` (ties: smaller `y`).
    pub fn canonical(pts: [Point; 4]) -> Result<Self> {
        let mut v = pts;
        if signed_area(&v) < 0.0 {
            v.reverse();
        }
        let start = (0..4)
            .min_by(|&a, &b| {
                let ka = v[a].x + v[a].y;
                let kb = v[b].x + v[b].y;
                ka.total_cmp(&kb).then(v[a].y.total_cmp(&v[b].y))
            })
            .unwrap_or(0);
        v.rotate_left(start);
        let q = Quad { v };
        q.validate()?;
        Ok(q)
    }

    fn validate(&self) -> Result<()> {
        if !self.v.iter().all(|p| p.is_finite()) {
            return Err(Error::InvalidPolygon("quad has non-finite vertex".into()));
        }
        let a = signed_area(&self.v);
        if a <= AREA_EPS {
            return Err(Error::InvalidPolygon(format!("quad must be clockwise with positive area (signed area {a})")));
        }
        if !is_simple(&self.v) {
            return Err(Error::InvalidPolygon("quad is self-intersecting".into()));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.v).abs()
    }

    /// Mean of the four vertices.
    pub fn center(&self) -> Point {
        centroid_of(&self.v)
    }

    pub fn edge_lengths(&self) -> [f64; 4] {
        std::array::from_fn(|i| self.v[i].dist(self.v[(i + 1) % 4]))
    }

    pub fn min_edge(&self) -> f64 {
        self.edge_lengths().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Containment with `slack` px of tolerance around the outline.
    pub fn contains(&self, p: Point, slack: f64) -> bool {
        contains_point(&self.v, p) || distance_to_outline(p, &self.v) <= slack
    }

    /// Unit direction of the longer pair of opposite edges, averaged over the
    /// pair so that slightly skewed quads still give a sensible axis.
    pub fn long_axis(&self) -> Point {
        let [a, b, c, d] = self.v;
        let e01 = (b - a) + (c - d);
        let e12 = (c - b) + (d - a);
        let axis = if e01.norm() >= e12.norm() { e01 } else { e12 };
        axis.normalized().unwrap_or(Point::new(1.0, 0.0))
    }

    pub fn scaled(&self, k: f64) -> Quad {
        Quad { v: self.v.map(|p| p * k) }
    }

    pub fn bbox(&self) -> [f64; 4] {
        bbox_of(&self.v)
    }
}

/// `[min_x, min_y, max_x, max_y]`.
pub fn bbox_of(pts: &[Point]) -> [f64; 4] {
    pts.iter().fold([f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY], |b, p| {
        [b[0].min(p.x), b[1].min(p.y), b[2].max(p.x), b[3].max(p.y)]
    })
}

/// A text outline with an even number of vertices: the first half is the top
/// chain left to right, the second half the bottom chain right to left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pts: Vec<Point>,
}

impl Polygon {
    /// Validates the outline. Counter-clockwise input is reversed, which maps
    /// a "bottom chain first" outline onto the top-chain-first convention.
    pub fn new(mut pts: Vec<Point>) -> Result<Self> {
        if pts.len() < 4 || !pts.len().is_multiple_of(2) {
            return Err(Error::InvalidPolygon(format!("need an even vertex count >= 4, got {}", pts.len())));
        }
        if !pts.iter().all(|p| p.is_finite()) {
            return Err(Error::InvalidPolygon("non-finite vertex".into()));
        }
        let a = signed_area(&pts);
        if a.abs() <= AREA_EPS {
            return Err(Error::InvalidPolygon("zero area".into()));
        }
        if !is_simple(&pts) {
            return Err(Error::InvalidPolygon("self-intersecting outline".into()));
        }
        if a < 0.0 {
            pts.reverse();
        }
        Ok(Self { pts })
    }

    pub fn from_quad(q: &Quad) -> Self {
        Self { pts: q.v.to_vec() }
    }

    pub fn points(&self) -> &[Point] {
        &self.pts
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.pts).abs()
    }

    /// Top chain, left to right.
    pub fn top_chain(&self) -> &[Point] {
        &self.pts[..self.pts.len() / 2]
    }

    /// Bottom chain re-ordered left to right.
    pub fn bottom_chain(&self) -> Vec<Point> {
        self.pts[self.pts.len() / 2..].iter().rev().copied().collect()
    }

    pub fn scaled(&self, k: f64) -> Polygon {
        Polygon { pts: self.pts.iter().map(|&p| p * k).collect() }
    }

    pub fn bbox(&self) -> [f64; 4] {
        bbox_of(&self.pts)
    }
}

/// Splits a chain polygon with `2k` vertices into its `k - 1` consecutive
/// quads `(top[i], top[i+1], bottom[i+1], bottom[i])`.
pub fn decompose_to_quads(p: &Polygon) -> Result<Vec<Quad>> {
    decompose_points(p.points())
}

pub(crate) fn decompose_points(pts: &[Point]) -> Result<Vec<Quad>> {
    if !pts.len().is_multiple_of(2) || pts.len() < 4 {
        return Err(Error::InvalidPolygon(format!("quad decomposition needs an even vertex count >= 4, got {}", pts.len())));
    }
    let k = pts.len() / 2;
    let top = &pts[..k];
    let bottom: Vec<Point> = pts[k..].iter().rev().copied().collect();
    Ok((0..k - 1).map(|i| Quad { v: [top[i], top[i + 1], bottom[i + 1], bottom[i]] }).collect())
}

pub const DONT_CARE: &str = "###";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub polygon: Polygon,
    pub dont_care: bool,
    pub transcription: String,
}

impl Annotation {
    pub fn new(polygon: Polygon, transcription: impl Into<String>) -> Self {
        let transcription = transcription.into();
        Self { polygon, dont_care: transcription == DONT_CARE, transcription }
    }

    /// Parses one `x1,y1,...,xn,yn,transcription` line.
    ///
    /// The coordinate prefix is the longest run of numeric fields whose
    /// length is a multiple of four and which leaves at least one field for
    /// the transcription, so transcriptions may themselves contain commas or
    /// digits.
    pub fn parse_line(line: &str) -> Result<Self> {
        let line = line.trim_start_matches('\u{feff}').trim_end_matches(['\r', '\n']);
        let fields: Vec<&str> = line.split(',').collect();
        let numeric = fields.iter().take_while(|f| f.trim().parse::<f64>().is_ok()).count();
        let mut k = numeric.min(fields.len().saturating_sub(1));
        k -= k % 4;
        if k < 8 {
            return Err(Error::Format(format!("not an annotation line: {line:?}")));
        }
        let coords: Vec<f64> = fields[..k].iter().map(|f| f.trim().parse::<f64>().expect("checked numeric")).collect();
        let pts = coords.chunks(2).map(|c| Point::new(c[0], c[1])).collect();
        let polygon = Polygon::new(pts)?;
        Ok(Annotation::new(polygon, fields[k..].join(",")))
    }

    pub fn to_line(&self) -> String {
        let mut s = String::new();
        for p in self.polygon.points() {
            s.push_str(&format!("{},{},", p.x, p.y));
        }
        s.push_str(&self.transcription);
        s
    }
}

/// Parses a whole annotation file; blank lines are skipped.
pub fn parse_annotations(text: &str) -> Result<Vec<Annotation>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| Annotation::parse_line(l).map_err(|e| Error::Format(format!("line {}: {e}", i + 1))))
        .collect()
}

pub fn format_annotations(anns: &[Annotation]) -> String {
    let mut s = String::new();
    for a in anns {
        s.push_str(&a.to_line());
        s.push('\n');
    }
    s
}
