use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{DetectedText, TextInstance};
use crate::error::{Error, Result};
use crate::geom::{Point, Polygon};
use crate::labels::{BorderOffsetPair, MapBundle};

pub const MIN_SAMPLES: usize = 2;
pub const MAX_SAMPLES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TboSampling {
    /// Read TBO at the instance pixel nearest each sample point.
    #[default]
    Nearest,
    /// Bilinear over the instance pixels around each sample point.
    Bilinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructOptions {
    pub sampling: TboSampling,
    /// Slide the first and last border pairs outward along the run axis
    /// until they reach the assigned quad's extent. The TCL map is shrunk at
    /// both ends, so without this the outline stops short of the text.
    pub extend_ends: bool,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self { sampling: TboSampling::Nearest, extend_ends: true }
    }
}

fn pixel_point((r, c): (usize, usize)) -> Point {
    Point::new(c as f64, r as f64)
}

fn nearest(pixels: &[(usize, usize)], p: Point) -> (usize, usize) {
    *pixels.iter().min_by(|&&a, &&b| pixel_point(a).dist(p).total_cmp(&pixel_point(b).dist(p))).expect("non-empty pixel set")
}

fn bilinear(bundle: &MapBundle, members: &HashSet<(usize, usize)>, p: Point) -> Option<BorderOffsetPair> {
    let (x0, y0) = (p.x.floor(), p.y.floor());
    let (fx, fy) = (p.x - x0, p.y - y0);
    let mut acc = BorderOffsetPair { upper: Point::default(), lower: Point::default() };
    let mut wsum = 0.0;
    for (dx, dy, w) in [(0., 0., (1. - fx) * (1. - fy)), (1., 0., fx * (1. - fy)), (0., 1., (1. - fx) * fy), (1., 1., fx * fy)] {
        let (x, y) = (x0 + dx, y0 + dy);
        if x < 0.0 || y < 0.0 || w <= 0.0 || !members.contains(&(y as usize, x as usize)) {
            continue;
        }
        let b = bundle.tbo_at(y as usize, x as usize);
        acc.upper = acc.upper + b.upper * w;
        acc.lower = acc.lower + b.lower * w;
        wsum += w;
    }
    (wsum > 1e-9).then(|| BorderOffsetPair { upper: acc.upper * (1.0 / wsum), lower: acc.lower * (1.0 / wsum) })
}

/// Slides border pair `end` outward along the local center-line direction
/// (from pair `inner` towards it) until its outermost point reaches
/// `limit` along `axis`. Never moves inward and never farther than `cap`.
fn extend_end(pairs: &mut [(Point, Point)], end: usize, inner: usize, axis: Point, limit: f64, cap: f64) {
    let mid = |p: &(Point, Point)| (p.0 + p.1) * 0.5;
    let local = (mid(&pairs[end]) - mid(&pairs[inner])).normalized().filter(|d| d.dot(axis) > 0.2).unwrap_or(axis);
    let (a, b) = pairs[end];
    let reach = a.dot(axis).max(b.dot(axis));
    let dist = ((limit - reach) / local.dot(axis)).clamp(0.0, cap);
    pairs[end] = (a + local * dist, b + local * dist);
}

/// Number of sample points for a center line of length `len` and mean
/// local height `height`.
pub fn sample_count(len: f64, height: f64) -> usize {
    if !(height > 1e-9) || !len.is_finite() {
        return MIN_SAMPLES;
    }
    ((len / height).round() as usize).clamp(MIN_SAMPLES, MAX_SAMPLES)
}

/// Rebuilds an instance's outline from the border offsets sampled along its
/// center line, in input-image coordinates.
///
/// Pixels are projected onto the quad's long axis and split into `n`
/// equal-width buckets; each bucket centroid (empty buckets interpolated)
/// contributes one upper and one lower border point.
pub fn reconstruct_polygon(inst: &TextInstance, bundle: &MapBundle, opts: &ReconstructOptions) -> Result<DetectedText> {
    let pixels = &inst.pixels;
    if pixels.is_empty() {
        return Err(Error::DegenerateInstance("instance has no pixels".into()));
    }
    let offsets: Vec<BorderOffsetPair> = pixels.iter().map(|&(r, c)| bundle.tbo_at(r, c)).collect();
    let inv = 1.0 / pixels.len() as f64;
    let mean_upper = offsets.iter().fold(Point::default(), |a, o| a + o.upper) * inv;
    let height = offsets.iter().map(|o| o.upper.norm() + o.lower.norm()).sum::<f64>() * inv;

    // Orient the run axis so the upper border lies on its left (screen
    // coordinates, y down), which makes the output clockwise.
    let mut u = inst.quad.quad.long_axis();
    let side = u.cross(mean_upper);
    if side > 0.0 || (side == 0.0 && (u.x < 0.0 || (u.x == 0.0 && u.y < 0.0))) {
        u = -u;
    }

    let proj: Vec<f64> = pixels.iter().map(|&p| pixel_point(p).dot(u)).collect();
    let smin = proj.iter().copied().fold(f64::INFINITY, f64::min);
    let smax = proj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let len = smax - smin;
    let n = sample_count(len, height);

    let mut sums = vec![(Point::default(), 0usize); n];
    let mut members: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (&px, &s) in pixels.iter().zip(&proj) {
        let k = if len > 0.0 { (((s - smin) / len * n as f64) as usize).min(n - 1) } else { 0 };
        sums[k].0 = sums[k].0 + pixel_point(px);
        sums[k].1 += 1;
        members[k].push(px);
    }
    let filled: Vec<usize> = (0..n).filter(|&k| sums[k].1 > 0).collect();
    if filled.is_empty() {
        return Err(Error::DegenerateInstance("no center-line samples".into()));
    }
    let centroid = |k: usize| sums[k].0 * (1.0 / sums[k].1 as f64);
    let centers: Vec<Point> = (0..n)
        .map(|k| {
            if sums[k].1 > 0 {
                return centroid(k);
            }
            let prev = filled.iter().rev().find(|&&j| j < k);
            let next = filled.iter().find(|&&j| j > k);
            match (prev, next) {
                (Some(&a), Some(&b)) => centroid(a).lerp(centroid(b), (k - a) as f64 / (b - a) as f64),
                (Some(&a), None) => centroid(a),
                (None, Some(&b)) => centroid(b),
                (None, None) => unreachable!("at least one bucket is filled"),
            }
        })
        .collect();

    let member_set: HashSet<(usize, usize)> =
        if opts.sampling == TboSampling::Bilinear { pixels.iter().copied().collect() } else { HashSet::new() };
    let mut pairs: Vec<(Point, Point)> = centers
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            if opts.sampling == TboSampling::Bilinear {
                if let Some(b) = bilinear(bundle, &member_set, p) {
                    return (p + b.upper, p + b.lower);
                }
            }
            let pool = if members[k].is_empty() { pixels.as_slice() } else { members[k].as_slice() };
            let q = nearest(pool, p);
            let b = bundle.tbo_at(q.0, q.1);
            (pixel_point(q) + b.upper, pixel_point(q) + b.lower)
        })
        .collect();

    if opts.extend_ends {
        let ext = inst.quad.quad.v.map(|v| v.dot(u));
        let qmin = ext.iter().copied().fold(f64::INFINITY, f64::min);
        let qmax = ext.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let cap = height + 1.0;
        let last = pairs.len() - 1;
        extend_end(&mut pairs, 0, 1, -u, -qmin, cap);
        extend_end(&mut pairs, last, last - 1, u, qmax, cap);
    }

    let k = bundle.stride as f64;
    let outline: Vec<Point> = pairs.iter().map(|p| p.0 * k).chain(pairs.iter().rev().map(|p| p.1 * k)).collect();
    let polygon = match Polygon::new(outline) {
        Ok(p) => p,
        Err(e) => {
            // Noisy offsets can fold the sampled outline; the assigned quad
            // still covers the instance.
            log::debug!("border outline rejected ({e}); using the instance quad");
            Polygon::new(inst.quad.quad.scaled(k).v.to_vec()).map_err(|e| Error::DegenerateInstance(format!("instance quad: {e}")))?
        }
    };
    Ok(DetectedText { polygon, score: inst.quad.score })
}
