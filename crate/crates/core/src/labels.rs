//! Ground-truth map generation: TCL, TCO, TVO and TBO from polygon
//! annotations.
//!
//! All maps live at map resolution (input pixels / stride). Map pixel
//! `(row, col)` stands for the map-space point `(col, row)`; every offset is
//! measured from that point in map pixels.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{decompose_points, distance_to_outline, fill_polygon, min_enclosing_quad, Annotation, Point, Polygon, Quad};
use crate::par::{self, Execution};
use crate::smap;
use crate::tensor::Tensor;

pub const DEFAULT_SHRINK_RATIO: f64 = 0.3;
/// Instances whose enclosing quad has an edge shorter than this (input px)
/// are not supervised.
pub const MIN_EDGE_PX: f64 = 8.0;

pub const TCL_CHANNELS: usize = 1;
pub const TCO_CHANNELS: usize = 2;
pub const TVO_CHANNELS: usize = 8;
pub const TBO_CHANNELS: usize = 4;

/// Offsets from a center-line point to its paired points on the top and
/// bottom borders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BorderOffsetPair {
    pub upper: Point,
    pub lower: Point,
}

/// Shrinks a chain polygon to its text center region.
///
/// Every vertex moves toward its partner on the opposite chain by `r` times
/// the local height; the first and last vertex pairs then move inward along
/// their chains by `r` times their local height, capped at half of the end
/// segment.
pub fn shrink_to_tcl(p: &Polygon, r: f64) -> Result<Polygon> {
    if !(r > 0.0 && r < 0.5) {
        return Err(Error::InvalidArgument(format!("shrink ratio must be in (0, 0.5), got {r}")));
    }
    let top = p.top_chain();
    let bot = p.bottom_chain();
    let k = top.len();
    let heights: Vec<f64> = top.iter().zip(&bot).map(|(t, b)| t.dist(*b)).collect();
    let mut nt: Vec<Point> = top.iter().zip(&bot).map(|(&t, &b)| t.lerp(b, r)).collect();
    let mut nb: Vec<Point> = top.iter().zip(&bot).map(|(&t, &b)| b.lerp(t, r)).collect();

    let pull = |chain: &[Point], from: usize, to: usize, amount: f64| -> Point {
        let seg = chain[to] - chain[from];
        let len = seg.norm();
        if len <= 1e-12 {
            return chain[from];
        }
        chain[from] + seg * (amount.min(0.5 * len) / len)
    };
    let (t0, tk) = (pull(&nt, 0, 1, r * heights[0]), pull(&nt, k - 1, k - 2, r * heights[k - 1]));
    let (b0, bk) = (pull(&nb, 0, 1, r * heights[0]), pull(&nb, k - 1, k - 2, r * heights[k - 1]));
    nt[0] = t0;
    nt[k - 1] = tk;
    nb[0] = b0;
    nb[k - 1] = bk;

    nb.reverse();
    nt.extend(nb);
    let shrunk = Polygon::new(nt).map_err(|e| Error::DegenerateInstance(format!("shrink collapsed the region: {e}")))?;
    if shrunk.area() <= 1e-9 {
        return Err(Error::DegenerateInstance("shrunk region has no area".into()));
    }
    Ok(shrunk)
}

/// Unit direction halfway between the top edge `v0 v1` and bottom edge `v3 v2`.
fn average_run_direction(q: &Quad) -> Option<Point> {
    let [v1, v2, v3, v4] = q.v;
    let top = (v2 - v1).normalized()?;
    let bottom = (v3 - v4).normalized()?;
    (top + bottom).normalized()
}

/// Interpolation ratio of `p0` between the left and right edges along the
/// average run direction, or `None` when the line is parallel to an edge.
fn run_ratio(q: &Quad, p0: Point) -> Option<f64> {
    let [v1, v2, v3, v4] = q.v;
    let d = average_run_direction(q)?;
    // Parameter s along p0 + s d where the line meets edge a -> b.
    let hit = |a: Point, b: Point| -> Option<f64> {
        let e = b - a;
        let denom = d.cross(e);
        (denom.abs() > 1e-12 * e.norm().max(1.0)).then(|| (a - p0).cross(e) / denom)
    };
    let s1 = hit(v1, v4)?;
    let s2 = hit(v2, v3)?;
    let span = s2 - s1;
    (span.abs() > 1e-12).then(|| -s1 / span)
}

fn border_pair(q: &Quad, p0: Point, t: f64) -> BorderOffsetPair {
    let [v1, v2, v3, v4] = q.v;
    BorderOffsetPair { upper: v1.lerp(v2, t) - p0, lower: v4.lerp(v3, t) - p0 }
}

/// Border offsets for a point inside a chain quad `(V1, V2, V3, V4)`.
///
/// The line through `p0` follows the average direction of the top and bottom
/// edges; it meets the left edge at `P1` and the right edge at `P2`. With
/// `t = |P0 - P1| / |P2 - P1|` the paired border points are `V1 + t (V2 - V1)`
/// and `V4 + t (V3 - V4)`.
pub fn gen_tbo_for_quad(q: &Quad, p0: Point) -> Result<BorderOffsetPair> {
    if !q.contains(p0, 1e-6) {
        return Err(Error::OutOfRegion { x: p0.x, y: p0.y });
    }
    let t = run_ratio(q, p0).ok_or_else(|| Error::DegenerateInstance("quad edges are parallel to its run direction".into()))?;
    Ok(border_pair(q, p0, t.clamp(0.0, 1.0)))
}

/// The four aligned label maps plus the ignore mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MapBundle {
    pub tcl: Tensor<f32>,
    pub tco: Tensor<f32>,
    pub tvo: Tensor<f32>,
    pub tbo: Tensor<f32>,
    pub ignore: Tensor<f32>,
    pub stride: usize,
}

impl MapBundle {
    pub fn zeros(height: usize, width: usize, stride: usize) -> Self {
        Self {
            tcl: Tensor::zeros(&[height, width, TCL_CHANNELS]),
            tco: Tensor::zeros(&[height, width, TCO_CHANNELS]),
            tvo: Tensor::zeros(&[height, width, TVO_CHANNELS]),
            tbo: Tensor::zeros(&[height, width, TBO_CHANNELS]),
            ignore: Tensor::zeros(&[height, width, 1]),
            stride,
        }
    }

    pub fn new(tcl: Tensor<f32>, tco: Tensor<f32>, tvo: Tensor<f32>, tbo: Tensor<f32>, ignore: Tensor<f32>, stride: usize) -> Result<Self> {
        let b = Self { tcl, tco, tvo, tbo, ignore, stride };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::InvalidArgument("stride must be positive".into()));
        }
        if self.tcl.rank() != 3 {
            return Err(Error::Shape(format!("tcl must be [H, W, 1], got {:?}", self.tcl.shape())));
        }
        let (h, w) = (self.height(), self.width());
        for (name, t, c) in [
            ("tcl", &self.tcl, TCL_CHANNELS),
            ("tco", &self.tco, TCO_CHANNELS),
            ("tvo", &self.tvo, TVO_CHANNELS),
            ("tbo", &self.tbo, TBO_CHANNELS),
            ("ignore", &self.ignore, 1),
        ] {
            if t.shape() != [h, w, c] {
                return Err(Error::Shape(format!("{name} must be [{h}, {w}, {c}], got {:?}", t.shape())));
            }
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.tcl.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.tcl.shape()[1]
    }

    #[inline]
    pub fn tcl_at(&self, r: usize, c: usize) -> f32 {
        self.tcl.data()[r * self.width() + c]
    }

    #[inline]
    pub fn tco_at(&self, r: usize, c: usize) -> Point {
        let o = (r * self.width() + c) * TCO_CHANNELS;
        let d = &self.tco.data()[o..o + 2];
        Point::new(d[0] as f64, d[1] as f64)
    }

    #[inline]
    pub fn tvo_at(&self, r: usize, c: usize) -> [Point; 4] {
        let o = (r * self.width() + c) * TVO_CHANNELS;
        let d = &self.tvo.data()[o..o + 8];
        std::array::from_fn(|i| Point::new(d[2 * i] as f64, d[2 * i + 1] as f64))
    }

    #[inline]
    pub fn tbo_at(&self, r: usize, c: usize) -> BorderOffsetPair {
        let o = (r * self.width() + c) * TBO_CHANNELS;
        let d = &self.tbo.data()[o..o + 4];
        BorderOffsetPair { upper: Point::new(d[0] as f64, d[1] as f64), lower: Point::new(d[2] as f64, d[3] as f64) }
    }

    /// Writes `tcl/tco/tvo/tbo/ignore.smap` and `meta.json` into `dir`.
    pub fn save(&self, dir: &Path, meta: &BundleMeta) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, t) in self.named_maps() {
            smap::write(&dir.join(format!("{name}.smap")), t)?;
        }
        let json = serde_json::to_string_pretty(meta).expect("meta serializes");
        let path = dir.join("meta.json");
        fs::write(&path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(dir: &Path) -> Result<(Self, BundleMeta)> {
        let path = dir.join("meta.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: BundleMeta = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let read = |n: &str| smap::read(&dir.join(format!("{n}.smap")));
        let bundle = MapBundle::new(read("tcl")?, read("tco")?, read("tvo")?, read("tbo")?, read("ignore")?, meta.stride)?;
        Ok((bundle, meta))
    }

    fn named_maps(&self) -> [(&'static str, &Tensor<f32>); 5] {
        [("tcl", &self.tcl), ("tco", &self.tco), ("tvo", &self.tvo), ("tbo", &self.tbo), ("ignore", &self.ignore)]
    }
}

/// Contents of a bundle directory's `meta.json`. `height` and `width` are the
/// input image size in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub height: usize,
    pub width: usize,
    pub stride: usize,
    pub shrink_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    DontCare,
    TooSmall,
    Degenerate,
    EmptyCenterLine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedInstance {
    pub index: usize,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    /// Instances that went to the ignore mask instead of the TCL map.
    pub skipped: Vec<SkippedInstance>,
    /// TCL pixels claimed by more than one instance (last one wins).
    pub contested_pixels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelConfig {
    pub stride: usize,
    pub shrink_ratio: f64,
    pub exec: Execution,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self { stride: crate::DEFAULT_STRIDE, shrink_ratio: DEFAULT_SHRINK_RATIO, exec: Execution::Sequential }
    }
}

struct InstanceLabels {
    pixels: Vec<(usize, usize)>,
    tco: Vec<[f32; 2]>,
    tvo: Vec<[f32; 8]>,
    tbo: Vec<[f32; 4]>,
}

enum Outcome {
    Labels(InstanceLabels),
    Ignored { region: Vec<Point>, reason: SkipReason },
}

fn label_instance(ann: &Annotation, map_h: usize, map_w: usize, stride: usize, r: f64) -> Outcome {
    let poly = ann.polygon.scaled(1.0 / stride as f64);
    let region = poly.points().to_vec();
    if ann.dont_care {
        return Outcome::Ignored { region, reason: SkipReason::DontCare };
    }
    let Ok(quad) = min_enclosing_quad(poly.points()) else {
        return Outcome::Ignored { region, reason: SkipReason::Degenerate };
    };
    if quad.min_edge() * (stride as f64) < MIN_EDGE_PX {
        return Outcome::Ignored { region, reason: SkipReason::TooSmall };
    }
    let (Ok(tcl), Ok(quads)) = (shrink_to_tcl(&poly, r), decompose_points(poly.points())) else {
        return Outcome::Ignored { region, reason: SkipReason::Degenerate };
    };

    let center = quad.center();
    let mut out = InstanceLabels { pixels: Vec::new(), tco: Vec::new(), tvo: Vec::new(), tbo: Vec::new() };
    fill_polygon(tcl.points(), map_w, map_h, |row, col| {
        let p = Point::new(col as f64, row as f64);
        let seg = quads
            .iter()
            .find(|q| q.contains(p, 1e-9))
            .or_else(|| quads.iter().min_by(|a, b| distance_to_outline(p, &a.v).total_cmp(&distance_to_outline(p, &b.v))))
            .expect("polygon has at least one quad");
        let t = run_ratio(seg, p).unwrap_or(0.5).clamp(0.0, 1.0);
        let pair = border_pair(seg, p, t);
        let dc = center - p;
        out.pixels.push((row, col));
        out.tco.push([dc.x as f32, dc.y as f32]);
        out.tvo.push(std::array::from_fn(|i| {
            let d = quad.v[i / 2] - p;
            (if i % 2 == 0 { d.x } else { d.y }) as f32
        }));
        out.tbo.push([pair.upper.x as f32, pair.upper.y as f32, pair.lower.x as f32, pair.lower.y as f32]);
    });
    if out.pixels.is_empty() {
        return Outcome::Ignored { region, reason: SkipReason::EmptyCenterLine };
    }
    Outcome::Labels(out)
}

/// Rasterizes ground-truth maps for an input image of `height x width`
/// pixels.
///
/// Per-instance labels may be computed in parallel (`cfg.exec`), but they
/// are painted in annotation order, so a later instance overwrites an
/// earlier one on contested pixels regardless of execution mode.
pub fn gen_bundle(anns: &[Annotation], height: usize, width: usize, cfg: &LabelConfig) -> Result<(MapBundle, LabelReport)> {
    gen_bundle_with_owners(anns, height, width, cfg).map(|(b, r, _)| (b, r))
}

/// [`gen_bundle`] plus, for every map pixel in raster order, the index of
/// the annotation whose TCL covers it.
pub fn gen_bundle_with_owners(
    anns: &[Annotation],
    height: usize,
    width: usize,
    cfg: &LabelConfig,
) -> Result<(MapBundle, LabelReport, Vec<Option<usize>>)> {
    if height == 0 || width == 0 || cfg.stride == 0 {
        return Err(Error::InvalidArgument(format!(
            "dimensions and stride must be positive (h={height}, w={width}, stride={})",
            cfg.stride
        )));
    }
    if !(cfg.shrink_ratio > 0.0 && cfg.shrink_ratio < 0.5) {
        return Err(Error::InvalidArgument(format!("shrink ratio must be in (0, 0.5), got {}", cfg.shrink_ratio)));
    }
    let map_h = height.div_ceil(cfg.stride);
    let map_w = width.div_ceil(cfg.stride);
    let outcomes = par::map(cfg.exec, anns, |a| label_instance(a, map_h, map_w, cfg.stride, cfg.shrink_ratio));

    let mut bundle = MapBundle::zeros(map_h, map_w, cfg.stride);
    let mut report = LabelReport::default();
    let mut owner = vec![usize::MAX; map_h * map_w];
    for (idx, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Outcome::Ignored { region, reason } => {
                let ig = bundle.ignore.data_mut();
                fill_polygon(&region, map_w, map_h, |r, c| ig[r * map_w + c] = 1.0);
                report.skipped.push(SkippedInstance { index: idx, reason });
            }
            Outcome::Labels(l) => {
                for (k, &(r, c)) in l.pixels.iter().enumerate() {
                    let at = r * map_w + c;
                    if owner[at] != usize::MAX && owner[at] != idx {
                        report.contested_pixels += 1;
                    }
                    owner[at] = idx;
                    bundle.tcl.data_mut()[at] = 1.0;
                    bundle.tco.data_mut()[at * 2..at * 2 + 2].copy_from_slice(&l.tco[k]);
                    bundle.tvo.data_mut()[at * 8..at * 8 + 8].copy_from_slice(&l.tvo[k]);
                    bundle.tbo.data_mut()[at * 4..at * 4 + 4].copy_from_slice(&l.tbo[k]);
                }
            }
        }
    }
    if report.contested_pixels > 0 {
        log::warn!("{} center-line pixels claimed by overlapping instances; later instances win", report.contested_pixels);
    }
    let owner = owner.into_iter().map(|o| (o != usize::MAX).then_some(o)).collect();
    Ok((bundle, report, owner))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{contains_point, distance_to_polyline, signed_area};

    fn poly(v: &[(f64, f64)]) -> Polygon {
        Polygon::new(v.iter().map(|&(x, y)| Point::new(x, y)).collect()).unwrap()
    }

    fn close(a: Point, b: Point, tol: f64) -> bool {
        a.dist(b) <= tol
    }

    #[test]
    fn shrink_rect_follows_the_rule() {
        let s = shrink_to_tcl(&poly(&[(0., 0.), (100., 0.), (100., 20.), (0., 20.)]), 0.3).unwrap();
        let want = [(6., 6.), (94., 6.), (94., 14.), (6., 14.)];
        for (p, (x, y)) in s.points().iter().zip(want) {
            assert!(close(*p, Point::new(x, y), 1e-9), "{p}");
        }
    }

    #[test]
    fn shrink_square() {
        let s = shrink_to_tcl(&poly(&[(0., 0.), (8., 0.), (8., 8.), (0., 8.)]), 0.3).unwrap();
        assert!((s.area() - 3.2 * 3.2).abs() < 1e-9);
    }

    #[test]
    fn shrink_rejects_bad_ratio_and_collapse() {
        let sq = poly(&[(0., 0.), (8., 0.), (8., 8.), (0., 8.)]);
        assert!(shrink_to_tcl(&sq, 0.5).is_err());
        // Height 10 with end pull 3 each side on a 4-long quad collapses.
        let thin = poly(&[(0., 0.), (4., 0.), (4., 10.), (0., 10.)]);
        assert!(matches!(shrink_to_tcl(&thin, 0.3), Err(Error::DegenerateInstance(_))));
    }

    fn ribbon14(amp: f64) -> Polygon {
        let mut top = Vec::new();
        let mut bot = Vec::new();
        for i in 0..7 {
            let x = 10.0 + i as f64 * 25.0;
            let y = 60.0 + amp * (i as f64 / 6.0 * std::f64::consts::PI).sin();
            top.push(Point::new(x, y - 12.0));
            bot.push(Point::new(x, y + 12.0));
        }
        bot.reverse();
        top.extend(bot);
        Polygon::new(top).unwrap()
    }

    #[test]
    fn shrunk_ribbon_stays_inside() {
        let p = ribbon14(-20.0);
        let s = shrink_to_tcl(&p, 0.3).unwrap();
        assert_eq!(s.len(), 14);
        for v in s.points() {
            assert!(contains_point(p.points(), *v), "{v} escaped");
        }
    }

    #[test]
    fn tbo_axis_aligned_examples() {
        let q = Quad::from_chain([Point::new(0., 0.), Point::new(10., 0.), Point::new(10., 4.), Point::new(0., 4.)]).unwrap();
        let m = gen_tbo_for_quad(&q, Point::new(5., 2.)).unwrap();
        assert!(close(m.upper, Point::new(0., -2.), 1e-12) && close(m.lower, Point::new(0., 2.), 1e-12));
        let m = gen_tbo_for_quad(&q, Point::new(2., 1.)).unwrap();
        assert!(close(m.upper, Point::new(0., -1.), 1e-12) && close(m.lower, Point::new(0., 3.), 1e-12));
        assert!((run_ratio(&q, Point::new(2., 1.)).unwrap() - 0.2).abs() < 1e-12);
        assert!(matches!(gen_tbo_for_quad(&q, Point::new(11., 2.)), Err(Error::OutOfRegion { .. })));
    }

    #[test]
    fn tbo_rotated_center_hits_edge_midpoints() {
        let c = Point::new(5., 2.);
        let rot = |p: Point| p.rotate_about(c, 25f64.to_radians());
        let base = [Point::new(0., 0.), Point::new(10., 0.), Point::new(10., 4.), Point::new(0., 4.)];
        let q = Quad::from_chain(base.map(rot)).unwrap();
        let m = gen_tbo_for_quad(&q, c).unwrap();
        // Oracle: the axis-aligned answer rotated into place.
        assert!(close(c + m.upper, rot(Point::new(5., 0.)), 1e-6));
        assert!(close(c + m.lower, rot(Point::new(5., 4.)), 1e-6));
    }

    #[test]
    fn tbo_ratio_increases_along_a_scan() {
        let q = Quad::from_chain([Point::new(0., 0.), Point::new(30., 0.), Point::new(30., 8.), Point::new(0., 8.)]).unwrap();
        let ts: Vec<f64> = (1..30).map(|x| run_ratio(&q, Point::new(x as f64, 3.3)).unwrap()).collect();
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn tbo_on_a_trapezoid_lands_on_edges() {
        let q = Quad::from_chain([Point::new(0., 0.), Point::new(20., 3.), Point::new(19., 14.), Point::new(1., 9.)]).unwrap();
        for p in [Point::new(4., 4.), Point::new(10., 7.), Point::new(17., 9.)] {
            let m = gen_tbo_for_quad(&q, p).unwrap();
            assert!(distance_to_polyline(p + m.upper, &[q.v[0], q.v[1]]) < 1e-9);
            assert!(distance_to_polyline(p + m.lower, &[q.v[3], q.v[2]]) < 1e-9);
        }
    }

    fn rect_annotation() -> Annotation {
        Annotation::new(poly(&[(40., 40.), (200., 40.), (200., 88.), (40., 88.)]), "word")
    }

    #[test]
    fn rect_instance_decodes_exactly() {
        let (b, report) = gen_bundle(&[rect_annotation()], 160, 256, &LabelConfig::default()).unwrap();
        assert!(report.skipped.is_empty());
        assert_eq!((b.height(), b.width()), (40, 64));
        let corners = [Point::new(10., 10.), Point::new(50., 10.), Point::new(50., 22.), Point::new(10., 22.)];
        let mut n = 0;
        for r in 0..b.height() {
            for c in 0..b.width() {
                if b.tcl_at(r, c) < 0.5 {
                    assert_eq!(b.tco_at(r, c), Point::default());
                    continue;
                }
                n += 1;
                let p = Point::new(c as f64, r as f64);
                assert!(close(p + b.tco_at(r, c), Point::new(30., 16.), 1e-4));
                for (off, v) in b.tvo_at(r, c).iter().zip(corners) {
                    assert!(close(p + *off, v, 1e-4));
                }
                let m = b.tbo_at(r, c);
                assert!(((p + m.upper).y - 10.0).abs() < 1e-4);
                assert!(((p + m.lower).y - 22.0).abs() < 1e-4);
            }
        }
        assert!(n > 0);
    }

    #[test]
    fn dont_care_and_small_instances_go_to_ignore() {
        let dc = Annotation::new(poly(&[(0., 0.), (60., 0.), (60., 30.), (0., 30.)]), "###");
        let tiny = Annotation::new(poly(&[(100., 100.), (140., 100.), (140., 106.), (100., 106.)]), "x");
        let (b, report) = gen_bundle(&[dc, tiny], 160, 160, &LabelConfig::default()).unwrap();
        assert_eq!(b.tcl.sum(), 0.0);
        assert!(b.ignore.sum() > 0.0);
        let reasons: Vec<_> = report.skipped.iter().map(|s| s.reason).collect();
        assert_eq!(reasons, vec![SkipReason::DontCare, SkipReason::TooSmall]);
    }

    #[test]
    fn overlap_is_reported_and_later_wins() {
        let a = rect_annotation();
        let b = Annotation::new(poly(&[(60., 40.), (220., 40.), (220., 88.), (60., 88.)]), "b");
        let (bundle, report) = gen_bundle(&[a, b], 160, 256, &LabelConfig::default()).unwrap();
        assert!(report.contested_pixels > 0);
        // A contested pixel points at the second rect's center (35, 16).
        let p = Point::new(30., 16.);
        assert!(close(p + bundle.tco_at(16, 30), Point::new(35., 16.), 1e-4));
    }

    #[test]
    fn parallel_and_sequential_bundles_match() {
        let anns: Vec<Annotation> = (0..6)
            .map(|i| {
                let y = 10.0 + 50.0 * i as f64;
                Annotation::new(poly(&[(20., y), (180., y + 10.), (176., y + 40.), (16., y + 30.)]), "w")
            })
            .collect();
        let seq = gen_bundle(&anns, 320, 200, &LabelConfig::default()).unwrap();
        let par = gen_bundle(&anns, 320, 200, &LabelConfig { exec: Execution::Parallel, ..Default::default() }).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn bundle_round_trips_through_disk() {
        let (b, _) = gen_bundle(&[rect_annotation()], 160, 256, &LabelConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let meta = BundleMeta { height: 160, width: 256, stride: 4, shrink_ratio: 0.3 };
        b.save(dir.path(), &meta).unwrap();
        let (back, m) = MapBundle::load(dir.path()).unwrap();
        assert_eq!(back, b);
        assert_eq!(m, meta);
        assert!(signed_area(rect_annotation().polygon.points()) > 0.0);
    }
}
