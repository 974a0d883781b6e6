//! Scanline rasterization of closed outlines.
//!
//! Rows use a half-open rule in y (an edge from `y0` to `y1` covers
//! `min <= y < max`) and intervals are half-open in x, so two outlines that
//! share an edge never claim the same sample.

use super::{bbox_of, Point, Polygon};

/// Samples per pixel used by [`polygon_iou`] unless told otherwise.
pub const DEFAULT_IOU_SCALE: f64 = 4.0;

fn crossings(pts: &[Point], y: f64, out: &mut Vec<f64>) {
    out.clear();
    let n = pts.len();
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        if (a.y <= y && y < b.y) || (b.y <= y && y < a.y) {
            out.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
        }
    }
    out.sort_by(f64::total_cmp);
}

/// Index ranges `[lo, hi)` of samples `x_j = origin + (j + phase) / scale`
/// that fall inside the even-odd intervals of `xs`.
fn sample_ranges(xs: &[f64], origin: f64, scale: f64, phase: f64, limit: i64, out: &mut Vec<(i64, i64)>) {
    out.clear();
    for pair in xs.chunks_exact(2) {
        let lo = ((pair[0] - origin) * scale - phase).ceil() as i64;
        let hi = ((pair[1] - origin) * scale - phase).ceil() as i64;
        let (lo, hi) = (lo.max(0), hi.min(limit));
        if hi > lo {
            out.push((lo, hi));
        }
    }
}

/// Calls `visit(row, col)` for every integer lattice point `(col, row)`
/// inside the outline and within `width x height`.
pub fn fill_polygon(pts: &[Point], width: usize, height: usize, mut visit: impl FnMut(usize, usize)) {
    if pts.len() < 3 || width == 0 || height == 0 {
        return;
    }
    let [_, y0, _, y1] = bbox_of(pts);
    let r0 = y0.ceil().max(0.0) as usize;
    let r1 = (y1.ceil().max(0.0) as usize).min(height);
    let mut xs = Vec::new();
    let mut ranges = Vec::new();
    for r in r0..r1 {
        crossings(pts, r as f64, &mut xs);
        sample_ranges(&xs, 0.0, 1.0, 0.0, width as i64, &mut ranges);
        for &(lo, hi) in &ranges {
            for c in lo..hi {
                visit(r, c as usize);
            }
        }
    }
}

/// Area estimate by counting samples at `scale` samples per pixel.
pub fn raster_area(pts: &[Point], scale: f64) -> f64 {
    let [x0, y0, x1, y1] = bbox_of(pts);
    let (ox, oy) = (x0.floor(), y0.floor());
    let cols = ((x1 - ox) * scale).ceil() as i64 + 1;
    let rows = ((y1 - oy) * scale).ceil() as i64 + 1;
    let mut xs = Vec::new();
    let mut ranges = Vec::new();
    let mut count = 0i64;
    for i in 0..rows {
        let y = oy + (i as f64 + 0.5) / scale;
        crossings(pts, y, &mut xs);
        sample_ranges(&xs, ox, scale, 0.5, cols, &mut ranges);
        count += ranges.iter().map(|(a, b)| b - a).sum::<i64>();
    }
    count as f64 / (scale * scale)
}

fn overlap_len(a: &[(i64, i64)], b: &[(i64, i64)]) -> i64 {
    let (mut i, mut j, mut acc) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if hi > lo {
            acc += hi - lo;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    acc
}

/// Intersection over union of two outlines, estimated on a sample grid with
/// `scale` samples per pixel spanning their joint bounding box.
pub fn polygon_iou(a: &Polygon, b: &Polygon, scale: f64) -> f64 {
    outline_iou(a.points(), b.points(), scale)
}

pub(crate) fn outline_iou(a: &[Point], b: &[Point], scale: f64) -> f64 {
    assert!(scale > 0.0, "iou scale must be positive");
    let ba = bbox_of(a);
    let bb = bbox_of(b);
    let (ox, oy) = (ba[0].min(bb[0]).floor(), ba[1].min(bb[1]).floor());
    let x1 = ba[2].max(bb[2]);
    let y1 = ba[3].max(bb[3]);
    let cols = ((x1 - ox) * scale).ceil() as i64 + 1;
    let rows = ((y1 - oy) * scale).ceil() as i64 + 1;
    let (mut xa, mut xb) = (Vec::new(), Vec::new());
    let (mut ra, mut rb) = (Vec::new(), Vec::new());
    let (mut na, mut nb, mut ni) = (0i64, 0i64, 0i64);
    for i in 0..rows {
        let y = oy + (i as f64 + 0.5) / scale;
        let in_a = y >= ba[1] && y <= ba[3];
        let in_b = y >= bb[1] && y <= bb[3];
        ra.clear();
        rb.clear();
        if in_a {
            crossings(a, y, &mut xa);
            sample_ranges(&xa, ox, scale, 0.5, cols, &mut ra);
        }
        if in_b {
            crossings(b, y, &mut xb);
            sample_ranges(&xb, ox, scale, 0.5, cols, &mut rb);
        }
        na += ra.iter().map(|(s, e)| e - s).sum::<i64>();
        nb += rb.iter().map(|(s, e)| e - s).sum::<i64>();
        if !ra.is_empty() && !rb.is_empty() {
            ni += overlap_len(&ra, &rb);
        }
    }
    let union = na + nb - ni;
    if union <= 0 {
        return 0.0;
    }
    ni as f64 / union as f64
}
