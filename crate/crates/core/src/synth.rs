//! Seeded synthetic scenes and map corruptions.
//!
//! Scenes are lists of annotations: rotated rectangles and sine-displaced
//! ribbons sampled with seven points per chain. Perfect maps come straight
//! from [`crate::labels::gen_bundle`]; [`corrupt`] then adds noise and
//! fragmentation to model imperfect predictions.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{convex_hull, convex_intersection_area, distance_to_outline, min_enclosing_quad, Annotation, Point, Polygon, Quad};
use crate::labels::{gen_bundle, gen_bundle_with_owners, LabelConfig, MapBundle};

/// Vertices per ribbon chain; two chains make a 14-vertex outline.
pub const RIBBON_POINTS: usize = 7;
const PLACEMENT_ATTEMPTS: usize = 400;
const CANVAS_MARGIN: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SceneKind {
    #[default]
    Quad,
    Curved,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    /// Canvas size in input pixels.
    pub height: usize,
    pub width: usize,
    pub n_instances: usize,
    pub kind: SceneKind,
    /// Minimum distance between the enclosing rectangles of any two
    /// instances, in input pixels.
    pub min_gap: f64,
    /// Ribbon center-line amplitude as a fraction of its length.
    pub curvature: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self { seed: 0, height: 512, width: 512, n_instances: 5, kind: SceneKind::Quad, min_gap: 10.0, curvature: 0.08 }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height < 64 || self.width < 64 {
            return Err(Error::InvalidArgument(format!("canvas {}x{} is too small", self.height, self.width)));
        }
        if !(self.min_gap >= 0.0 && self.min_gap.is_finite()) || !(self.curvature >= 0.0 && self.curvature.is_finite()) {
            return Err(Error::InvalidArgument("gap and curvature must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub tcl_noise_sigma: f64,
    /// Gaussian noise on every TCO/TVO/TBO value, in map pixels.
    pub offset_noise_sigma: f64,
    /// Pieces each instance's TCL is cut into; 0 or 1 disables cutting.
    pub n_fragments: usize,
    /// Width of each cut in input pixels. Cuts are widened where needed so
    /// that the pieces are not 8-connected at map resolution.
    pub fragment_gap: f64,
    /// Only instances whose TCL is at least this long (input pixels) are cut.
    pub fragment_min_length: f64,
}

impl CorruptionSpec {
    pub fn validate(&self) -> Result<()> {
        let vals = [self.tcl_noise_sigma, self.offset_noise_sigma, self.fragment_gap, self.fragment_min_length];
        if vals.iter().all(|v| *v >= 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("corruption parameters must be non-negative: {self:?}")))
        }
    }
}

/// Independent generator for item `index` of a seeded batch.
pub fn scene_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Axis-aligned rectangle `len x h` centred at the origin, top chain first.
fn centred_rect(len: f64, h: f64) -> Vec<Point> {
    let (a, b) = (len / 2.0, h / 2.0);
    vec![Point::new(-a, -b), Point::new(a, -b), Point::new(a, b), Point::new(-a, b)]
}

fn rotate(pts: &[Point], theta: f64) -> Vec<Point> {
    pts.iter().map(|p| p.rotate_about(Point::default(), theta)).collect()
}

fn sample_quad_shape<R: Rng>(rng: &mut R, max_len: f64) -> Option<Vec<Point>> {
    let h_max = 64f64.min(max_len / 2.0);
    if h_max < 16.0 {
        return None;
    }
    let h = rng.random_range(16.0..=h_max);
    let aspect = rng.random_range(2.0..=12f64.min(max_len / h));
    let theta = rng.random_range(-40f64..=40.0).to_radians();
    Some(rotate(&centred_rect(h * aspect, h), theta))
}

/// Ribbon of constant height around a sine-displaced center line, before
/// rotation. `curvature` is the amplitude as a fraction of the length; it is
/// capped so the borders never fold.
pub fn ribbon(len: f64, h: f64, curvature: f64, freq: f64, phase: f64) -> Vec<Point> {
    let w = 2.0 * PI * freq;
    // The lower border folds once the curvature radius drops below h / 2;
    // keep at least twice that margin.
    let amp = (curvature * len).min(len * len / (h * w * w) / 4.0);
    let center = |t: f64| Point::new(len * (t - 0.5), amp * (w * t + phase).sin());
    let tangent = |t: f64| Point::new(len, amp * w * (w * t + phase).cos());
    let mut top = Vec::with_capacity(RIBBON_POINTS);
    let mut bottom = Vec::with_capacity(RIBBON_POINTS);
    for i in 0..RIBBON_POINTS {
        let t = i as f64 / (RIBBON_POINTS - 1) as f64;
        let d = tangent(t).normalized().expect("tangent has positive x");
        let up = Point::new(d.y, -d.x);
        top.push(center(t) + up * (h / 2.0));
        bottom.push(center(t) - up * (h / 2.0));
    }
    bottom.reverse();
    top.extend(bottom);
    top
}

fn sample_ribbon_shape<R: Rng>(rng: &mut R, max_len: f64, curvature: f64) -> Option<Vec<Point>> {
    let h_max = 40f64.min(max_len / 4.0);
    if h_max < 16.0 {
        return None;
    }
    let h = rng.random_range(16.0..=h_max);
    let aspect = rng.random_range(4.0..=10f64.min(max_len / h));
    // At most one sine period per eight text heights: short words bend as
    // arcs, long lines may wave.
    let freq = rng.random_range(0.5..=(aspect / 8.0).clamp(0.5, 1.0));
    let phase = rng.random_range(0.0..2.0 * PI);
    let theta = rng.random_range(-30f64..=30.0).to_radians();
    Some(rotate(&ribbon(h * aspect, h, curvature, freq, phase), theta))
}

/// Distance between two convex outlines; zero when they overlap or touch.
fn convex_gap(a: &[Point], b: &[Point]) -> f64 {
    if convex_intersection_area(a, b) > 0.0 {
        return 0.0;
    }
    let ab = a.iter().map(|&p| distance_to_outline(p, b)).fold(f64::INFINITY, f64::min);
    let ba = b.iter().map(|&p| distance_to_outline(p, a)).fold(f64::INFINITY, f64::min);
    ab.min(ba)
}

fn round2(p: Point) -> Point {
    Point::new((p.x * 100.0).round() / 100.0, (p.y * 100.0).round() / 100.0)
}

/// Rejection placement of shapes on a canvas, keeping the convex hulls of
/// everything placed so far at least `min_gap` apart.
struct Placer {
    height: f64,
    width: f64,
    min_gap: f64,
    hulls: Vec<Vec<Point>>,
}

impl Placer {
    fn new(height: usize, width: usize, min_gap: f64) -> Self {
        Self { height: height as f64, width: width as f64, min_gap, hulls: Vec::new() }
    }

    fn max_len(&self) -> f64 {
        0.8 * self.height.min(self.width)
    }

    /// Translates the group of outlines to a random free spot. `adjust` may
    /// nudge the chosen offset; the result is re-validated afterwards.
    fn place<R: Rng>(&mut self, rng: &mut R, shapes: &[Vec<Point>], adjust: impl Fn(Point) -> Point) -> Option<Vec<Polygon>> {
        let all: Vec<Point> = shapes.iter().flatten().copied().collect();
        let [x0, y0, x1, y1] = crate::geom::bbox_of(&all);
        let (lo_x, hi_x) = (CANVAS_MARGIN + 1.0 - x0, self.width - CANVAS_MARGIN - 1.0 - x1);
        let (lo_y, hi_y) = (CANVAS_MARGIN + 1.0 - y0, self.height - CANVAS_MARGIN - 1.0 - y1);
        if lo_x >= hi_x || lo_y >= hi_y {
            return None;
        }
        let offset = adjust(Point::new(rng.random_range(lo_x..hi_x), rng.random_range(lo_y..hi_y)));
        let moved: Vec<Vec<Point>> = shapes.iter().map(|s| s.iter().map(|&p| round2(p + offset)).collect()).collect();
        let [mx0, my0, mx1, my1] = crate::geom::bbox_of(&moved.concat());
        if mx0 < CANVAS_MARGIN || my0 < CANVAS_MARGIN || mx1 > self.width - CANVAS_MARGIN || my1 > self.height - CANVAS_MARGIN {
            return None;
        }
        let hull = convex_hull(&moved.concat());
        if self.hulls.iter().any(|h| convex_gap(h, &hull) < self.min_gap) {
            return None;
        }
        let polys: Vec<Polygon> = moved.into_iter().map(Polygon::new).collect::<Result<_>>().ok()?;
        if polys.iter().any(|p| min_enclosing_quad(p.points()).map_or(true, |q| q.min_edge() < crate::labels::MIN_EDGE_PX)) {
            return None;
        }
        self.hulls.push(hull);
        Some(polys)
    }
}

/// Generates a scene. Deterministic in `spec`; fails with
/// [`Error::SceneInfeasible`] (carrying the instances that did fit) when the
/// canvas cannot hold `n_instances` at the requested gap.
pub fn gen_scene(spec: &SceneSpec) -> Result<Vec<Annotation>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut placer = Placer::new(spec.height, spec.width, spec.min_gap);
    let mut out = Vec::with_capacity(spec.n_instances);
    for i in 0..spec.n_instances {
        let curved = match spec.kind {
            SceneKind::Quad => false,
            SceneKind::Curved => true,
            SceneKind::Mixed => rng.random_bool(0.5),
        };
        let placed = (0..PLACEMENT_ATTEMPTS).find_map(|_| {
            let shape = if curved {
                sample_ribbon_shape(&mut rng, placer.max_len(), spec.curvature)
            } else {
                sample_quad_shape(&mut rng, placer.max_len())
            }?;
            placer.place(&mut rng, &[shape], |p| p)
        });
        match placed {
            Some(mut p) => out.push(Annotation::new(p.remove(0), format!("text{i}"))),
            None => return Err(Error::SceneInfeasible { partial: out, requested: spec.n_instances }),
        }
    }
    Ok(out)
}

pub fn render_perfect_bundle(anns: &[Annotation], spec: &SceneSpec) -> Result<MapBundle> {
    Ok(gen_bundle(anns, spec.height, spec.width, &LabelConfig::default())?.0)
}

/// Groups TCL pixels (`tcl > 0.5`) by their decoded center `p + tco(p)`,
/// rounded to 0.01 map px. Groups are in raster order of their first pixel.
pub fn instance_groups(bundle: &MapBundle) -> Vec<Vec<(usize, usize)>> {
    let mut index: HashMap<(i64, i64), usize> = HashMap::new();
    let mut groups: Vec<Vec<(usize, usize)>> = Vec::new();
    for r in 0..bundle.height() {
        for c in 0..bundle.width() {
            if bundle.tcl_at(r, c) <= 0.5 {
                continue;
            }
            let ctr = Point::new(c as f64, r as f64) + bundle.tco_at(r, c);
            let key = ((ctr.x * 100.0).round() as i64, (ctr.y * 100.0).round() as i64);
            let g = *index.entry(key).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push((r, c));
        }
    }
    groups
}

fn fragment(out: &mut MapBundle, clean: &MapBundle, c: &CorruptionSpec) {
    let stride = clean.stride as f64;
    let width = clean.width();
    for pixels in instance_groups(clean) {
        let (r0, c0) = pixels[0];
        let p0 = Point::new(c0 as f64, r0 as f64);
        let Ok(quad) = Quad::canonical(clean.tvo_at(r0, c0).map(|d| p0 + d)) else { continue };
        let u = quad.long_axis();
        let proj: Vec<f64> = pixels.iter().map(|&(r, c)| Point::new(c as f64, r as f64).dot(u)).collect();
        let smin = proj.iter().copied().fold(f64::INFINITY, f64::min);
        let smax = proj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let len = smax - smin;
        if len * stride < c.fragment_min_length || len <= 0.0 {
            continue;
        }
        // Any 8-neighbour step moves at most |ux| + |uy| along u.
        let band = (c.fragment_gap / stride).max(u.x.abs() + u.y.abs() + 1e-3);
        let n = c.n_fragments as f64;
        if len <= (n - 1.0) * band + n {
            continue;
        }
        let cuts: Vec<f64> = (1..c.n_fragments).map(|k| smin + k as f64 * len / n).collect();
        for (&(r, col), &s) in pixels.iter().zip(&proj) {
            if cuts.iter().any(|&m| (s - m).abs() < band / 2.0) {
                out.tcl.data_mut()[r * width + col] = 0.0;
            }
        }
    }
}

/// Applies noise and fragmentation. A default (all-zero) spec returns the
/// bundle unchanged.
pub fn corrupt(bundle: &MapBundle, c: &CorruptionSpec, seed: u64) -> Result<MapBundle> {
    c.validate()?;
    bundle.validate()?;
    let mut out = bundle.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if c.tcl_noise_sigma > 0.0 {
        let n = Normal::new(0.0, c.tcl_noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for v in out.tcl.data_mut() {
            *v = (*v as f64 + n.sample(&mut rng)).clamp(0.0, 1.0) as f32;
        }
    }
    if c.offset_noise_sigma > 0.0 {
        let n = Normal::new(0.0, c.offset_noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for t in [&mut out.tco, &mut out.tvo, &mut out.tbo] {
            for v in t.data_mut() {
                *v += n.sample(&mut rng) as f32;
            }
        }
    }
    if c.n_fragments >= 2 {
        fragment(&mut out, bundle, c);
    }
    Ok(out)
}

/// A scene built to defeat connected-component clustering: one long
/// instance cut into three pieces and one pair of words whose center lines
/// touch at map resolution, plus two ordinary words.
#[derive(Debug, Clone)]
pub struct AdversarialScene {
    pub annotations: Vec<Annotation>,
    /// Corrupted maps to run detection on.
    pub bundle: MapBundle,
    /// Owning annotation of every clean TCL pixel, raster order.
    pub owners: Vec<Option<usize>>,
    /// Index of the fragmented instance.
    pub fragmented: usize,
    /// Indices of the adjacent pair.
    pub adjacent: [usize; 2],
    pub height: usize,
    pub width: usize,
}

impl AdversarialScene {
    pub fn adversarial_instances(&self) -> [usize; 3] {
        [self.fragmented, self.adjacent[0], self.adjacent[1]]
    }
}

/// Gap between the adjacent pair's center lines, input pixels.
pub const ADJACENT_TCL_GAP: f64 = 2.0;
/// Gap carved into the long instance's center line, input pixels.
pub const FRAGMENT_GAP: f64 = 5.0;
pub const FRAGMENT_COUNT: usize = 3;

pub fn gen_adversarial_scene(seed: u64) -> Result<AdversarialScene> {
    let (height, width) = (512, 512);
    let cfg = LabelConfig::default();
    let stride = cfg.stride as f64;
    let r = cfg.shrink_ratio;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut placer = Placer::new(height, width, 12.0);
    let infeasible = |partial: Vec<Annotation>| Error::SceneInfeasible { partial, requested: 5 };

    let long = (0..PLACEMENT_ATTEMPTS)
        .find_map(|_| {
            let h = rng.random_range(16.0..=24.0);
            let len = h * rng.random_range(10.0..=12.0);
            let shape = rotate(&centred_rect(len, h), rng.random_range(-15f64..=15.0).to_radians());
            placer.place(&mut rng, &[shape], |p| p)
        })
        .ok_or_else(|| infeasible(vec![]))?;

    // Two axis-aligned words on a shared baseline. Their boxes overlap so
    // that the shrunk center lines end `ADJACENT_TCL_GAP` apart; the left
    // center line is placed a quarter map pixel past a column so the two
    // rasterized center lines land in neighbouring columns.
    let pair = (0..PLACEMENT_ATTEMPTS)
        .find_map(|_| {
            let h: f64 = rng.random_range(20.0..=28.0);
            let (la, lb) = (h * rng.random_range(3.0..=4.0), h * rng.random_range(3.0..=4.0));
            let overlap = 2.0 * r * h - ADJACENT_TCL_GAP;
            let a: Vec<Point> = centred_rect(la, h).into_iter().map(|p| p + Point::new(-la / 2.0, 0.0)).collect();
            let b: Vec<Point> = centred_rect(lb, h).into_iter().map(|p| p + Point::new(lb / 2.0 - overlap, 0.0)).collect();
            let tcl_end = -r * h;
            placer.place(&mut rng, &[a, b], |off| {
                let x = (off.x + tcl_end) / stride;
                Point::new(off.x + (x.floor() + 0.25 - x) * stride, off.y.round())
            })
        })
        .ok_or_else(|| infeasible(vec![]))?;

    let mut polys: Vec<Polygon> = long.into_iter().chain(pair).collect();
    for _ in 0..2 {
        let p = (0..PLACEMENT_ATTEMPTS).find_map(|_| {
            let h = rng.random_range(16.0..=32.0);
            let shape = rotate(&centred_rect(h * rng.random_range(2.0..=4.0), h), rng.random_range(-30f64..=30.0).to_radians());
            placer.place(&mut rng, &[shape], |p| p)
        });
        match p {
            Some(mut p) => polys.push(p.remove(0)),
            None => {
                let partial = polys.into_iter().map(|p| Annotation::new(p, "w")).collect();
                return Err(infeasible(partial));
            }
        }
    }
    let annotations: Vec<Annotation> = polys.into_iter().enumerate().map(|(i, p)| Annotation::new(p, format!("word{i}"))).collect();
    let (clean, _, owners) = gen_bundle_with_owners(&annotations, height, width, &cfg)?;
    let spec = CorruptionSpec { n_fragments: FRAGMENT_COUNT, fragment_gap: FRAGMENT_GAP, fragment_min_length: 120.0, ..Default::default() };
    let bundle = corrupt(&clean, &spec, seed)?;
    Ok(AdversarialScene { annotations, bundle, owners, fragmented: 0, adjacent: [1, 2], height, width })
}

/// For every ground-truth instance, whether clustering recovered it: exactly
/// one cluster touches its center-line pixels and that cluster holds no
/// other instance's pixels.
pub fn clusters_correct(clusters: &[Vec<(usize, usize)>], owners: &[Option<usize>], width: usize, n_instances: usize) -> Vec<bool> {
    let mut touching: Vec<Vec<usize>> = vec![Vec::new(); n_instances];
    let mut pure = vec![true; clusters.len()];
    for (k, cl) in clusters.iter().enumerate() {
        let mut seen: Vec<usize> = cl.iter().filter_map(|&(r, c)| owners[r * width + c]).collect();
        seen.sort_unstable();
        seen.dedup();
        pure[k] = seen.len() <= 1;
        for i in seen {
            touching[i].push(k);
        }
    }
    touching.iter().map(|t| t.len() == 1 && pure[t[0]]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{format_annotations, polygon_iou, DEFAULT_IOU_SCALE};
    use crate::postprocess::{
        binarize_tcl, components_to_instances, connected_components, detect, nms, point_to_quad_assign, propose_quads, DetectConfig,
    };
    use crate::Execution;

    #[test]
    fn scenes_are_deterministic() {
        for kind in [SceneKind::Quad, SceneKind::Curved, SceneKind::Mixed] {
            let spec = SceneSpec { seed: 42, kind, ..Default::default() };
            assert_eq!(format_annotations(&gen_scene(&spec).unwrap()), format_annotations(&gen_scene(&spec).unwrap()));
        }
    }

    #[test]
    fn scenes_respect_gap_and_edges() {
        for seed in 0..20 {
            let spec = SceneSpec { seed, kind: SceneKind::Mixed, ..Default::default() };
            let anns = gen_scene(&spec).unwrap();
            assert_eq!(anns.len(), 5);
            for (i, a) in anns.iter().enumerate() {
                assert!(min_enclosing_quad(a.polygon.points()).unwrap().min_edge() >= 8.0);
                assert!(matches!(a.polygon.len(), 4 | 14));
                for b in &anns[i + 1..] {
                    let g = convex_gap(&convex_hull(a.polygon.points()), &convex_hull(b.polygon.points()));
                    assert!(g >= spec.min_gap - 1e-9, "seed {seed}: gap {g}");
                }
            }
        }
    }

    #[test]
    fn infeasible_scene_reports_partial() {
        let spec = SceneSpec { height: 128, width: 128, n_instances: 40, min_gap: 20.0, ..Default::default() };
        match gen_scene(&spec) {
            Err(Error::SceneInfeasible { partial, requested }) => {
                assert_eq!(requested, 40);
                assert!(partial.len() < 40);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn flat_ribbon_is_a_rectangle() {
        let pts = ribbon(200.0, 20.0, 0.0, 0.7, 1.0);
        assert_eq!(pts.len(), 14);
        let rect = centred_rect(200.0, 20.0);
        for p in pts {
            assert!(distance_to_outline(p, &rect) <= 0.5, "{p}");
        }
    }

    #[test]
    fn ribbon_stays_simple_at_high_curvature() {
        for freq in [0.5, 0.75, 1.0] {
            assert!(Polygon::new(ribbon(64.0, 16.0, 10.0, freq, 0.3)).is_ok());
        }
    }

    #[test]
    fn zero_corruption_is_identity() {
        let spec = SceneSpec { seed: 3, ..Default::default() };
        let b = render_perfect_bundle(&gen_scene(&spec).unwrap(), &spec).unwrap();
        assert_eq!(corrupt(&b, &CorruptionSpec::default(), 9).unwrap(), b);
        let noisy = CorruptionSpec { tcl_noise_sigma: 0.1, offset_noise_sigma: 0.5, ..Default::default() };
        assert_eq!(corrupt(&b, &noisy, 9).unwrap(), corrupt(&b, &noisy, 9).unwrap());
        assert!(corrupt(&b, &CorruptionSpec { tcl_noise_sigma: -1.0, ..Default::default() }, 0).is_err());
    }

    #[test]
    fn fragmentation_splits_components_not_assignment() {
        let spec = SceneSpec { seed: 5, n_instances: 1, ..Default::default() };
        let poly = Polygon::new(centred_rect(300.0, 20.0).into_iter().map(|p| p + Point::new(256.0, 200.0)).collect()).unwrap();
        let b = render_perfect_bundle(&[Annotation::new(poly, "long")], &spec).unwrap();
        let c = CorruptionSpec { n_fragments: 3, fragment_gap: 5.0, ..Default::default() };
        let cut = corrupt(&b, &c, 1).unwrap();
        let mask = binarize_tcl(&cut.tcl, 0.5).unwrap();
        assert_eq!(connected_components(&mask).len(), 3);
        let kept = nms(&propose_quads(&mask, &cut), 0.3).unwrap();
        assert_eq!(kept.len(), 1);
        let inst = point_to_quad_assign(&mask, &cut, &kept, 5, f64::INFINITY, Execution::Sequential).unwrap();
        assert_eq!(inst.len(), 1);
    }

    #[test]
    fn offset_noise_keeps_the_representative_close() {
        let spec = SceneSpec { seed: 6, n_instances: 1, ..Default::default() };
        let anns = gen_scene(&spec).unwrap();
        let b = render_perfect_bundle(&anns, &spec).unwrap();
        let noisy = corrupt(&b, &CorruptionSpec { offset_noise_sigma: 0.5, ..Default::default() }, 2).unwrap();
        let mask = binarize_tcl(&noisy.tcl, 0.5).unwrap();
        let kept = nms(&propose_quads(&mask, &noisy), 0.3).unwrap();
        let truth = min_enclosing_quad(anns[0].polygon.scaled(0.25).points()).unwrap();
        let best = kept.iter().map(|k| crate::geom::quad_iou(&k.quad, &truth)).fold(0.0, f64::max);
        assert!(best >= 0.9, "{best}");
    }

    #[test]
    fn adversarial_scene_separates_the_methods() {
        let scene = gen_adversarial_scene(1).unwrap();
        let mask = binarize_tcl(&scene.bundle.tcl, 0.5).unwrap();
        let kept = nms(&propose_quads(&mask, &scene.bundle), 0.3).unwrap();
        let p2q: Vec<_> = point_to_quad_assign(&mask, &scene.bundle, &kept, 5, f64::INFINITY, Execution::Sequential)
            .unwrap()
            .into_iter()
            .map(|i| i.pixels)
            .collect();
        let cc: Vec<_> = components_to_instances(&connected_components(&mask), &scene.bundle, 5).into_iter().map(|i| i.pixels).collect();
        let n = scene.annotations.len();
        assert!(clusters_correct(&p2q, &scene.owners, scene.bundle.width(), n).iter().all(|&ok| ok));
        let cc_ok = clusters_correct(&cc, &scene.owners, scene.bundle.width(), n);
        for i in scene.adversarial_instances() {
            assert!(!cc_ok[i], "instance {i} survived connected components");
        }
    }

    #[test]
    fn perfect_curved_scene_round_trips() {
        let spec = SceneSpec { seed: 8, kind: SceneKind::Curved, ..Default::default() };
        let anns = gen_scene(&spec).unwrap();
        let dets = detect(&render_perfect_bundle(&anns, &spec).unwrap(), &DetectConfig::default()).unwrap();
        assert_eq!(dets.len(), anns.len());
        for a in &anns {
            let best = dets.iter().map(|d| polygon_iou(&d.polygon, &a.polygon, DEFAULT_IOU_SCALE)).fold(0.0, f64::max);
            assert!(best >= 0.9, "{best}");
        }
    }
}
