use super::{signed_area, Point, Quad};
use crate::error::{Error, Result};

/// Andrew's monotone chain. Returns the hull clockwise-on-screen (positive
/// signed area) without repeated or collinear points.
pub fn convex_hull(pts: &[Point]) -> Vec<Point> {
    let mut p: Vec<Point> = pts.to_vec();
    p.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let turn = |o: Point, a: Point, b: Point| (a - o).cross(b - o);
    let mut lower: Vec<Point> = Vec::with_capacity(p.len());
    for &q in &p {
        while lower.len() >= 2 && turn(lower[lower.len() - 2], lower[lower.len() - 1], q) <= 0.0 {
            lower.pop();
        }
        lower.push(q);
    }
    let mut upper: Vec<Point> = Vec::with_capacity(p.len());
    for &q in p.iter().rev() {
        while upper.len() >= 2 && turn(upper[upper.len() - 2], upper[upper.len() - 1], q) <= 0.0 {
            upper.pop();
        }
        upper.push(q);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    // The chain above is counter-clockwise in a y-up frame; flip for y-down.
    if signed_area(&lower) < 0.0 {
        lower.reverse();
    }
    lower
}

/// Minimum-area rotated rectangle around the points (rotating calipers over
/// the hull edges), returned as a canonical clockwise [`Quad`].
pub fn min_enclosing_quad(pts: &[Point]) -> Result<Quad> {
    let hull = convex_hull(pts);
    if hull.len() < 3 || signed_area(&hull).abs() <= 1e-9 {
        return Err(Error::InvalidPolygon("cannot enclose a degenerate point set".into()));
    }
    let n = hull.len();
    let mut best: Option<(f64, [Point; 4])> = None;
    for i in 0..n {
        let Some(e) = (hull[(i + 1) % n] - hull[i]).normalized() else {
            continue;
        };
        let nrm = Point::new(-e.y, e.x);
        let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &h in &hull {
            let u = h.dot(e);
            let v = h.dot(nrm);
            u0 = u0.min(u);
            u1 = u1.max(u);
            v0 = v0.min(v);
            v1 = v1.max(v);
        }
        let area = (u1 - u0) * (v1 - v0);
        if best.as_ref().is_none_or(|(a, _)| area < *a - 1e-12 * a.abs()) {
            let corner = |u: f64, v: f64| e * u + nrm * v;
            best = Some((area, [corner(u0, v0), corner(u1, v0), corner(u1, v1), corner(u0, v1)]));
        }
    }
    let (_, corners) = best.ok_or_else(|| Error::InvalidPolygon("empty hull".into()))?;
    Quad::canonical(corners)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::polygon_area;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rect(w: f64, h: f64) -> Vec<Point> {
        vec![Point::new(0., 0.), Point::new(w, 0.), Point::new(w, h), Point::new(0., h)]
    }

    #[test]
    fn axis_aligned_rect_is_a_fixed_point() {
        let q = min_enclosing_quad(&rect(10., 4.)).unwrap();
        let want = rect(10., 4.);
        for (a, b) in q.v.iter().zip(&want) {
            assert!(a.dist(*b) < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn rotated_rect_is_recovered() {
        let c = Point::new(5., 2.);
        let rot: Vec<Point> = rect(10., 4.).into_iter().map(|p| p.rotate_about(c, 30f64.to_radians())).collect();
        let q = min_enclosing_quad(&rot).unwrap();
        assert!((q.area() - 40.0).abs() < 1e-6);
        for p in &rot {
            assert!(q.v.iter().any(|v| v.dist(*p) < 1e-6));
        }
        assert!(signed_area(&q.v) > 0.0);
    }

    #[test]
    fn degenerate_input_is_rejected() {
        let line = vec![Point::new(0., 0.), Point::new(1., 1.), Point::new(2., 2.)];
        assert!(min_enclosing_quad(&line).is_err());
    }

    /// Bounding box area of `pts` when measured in a frame rotated by `theta`.
    fn swept_box_area(pts: &[Point], theta: f64) -> f64 {
        let e = Point::new(theta.cos(), theta.sin());
        let n = Point::new(-e.y, e.x);
        let us: Vec<f64> = pts.iter().map(|p| p.dot(e)).collect();
        let vs: Vec<f64> = pts.iter().map(|p| p.dot(n)).collect();
        let span = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min);
        span(&us) * span(&vs)
    }

    #[test]
    fn beats_exhaustive_angle_sweep_on_random_hexagons() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let c = Point::new(50., 50.);
            let mut angles: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
            angles.sort_by(f64::total_cmp);
            let hex: Vec<Point> = angles.iter().map(|&a| c + Point::new(a.cos(), a.sin()) * rng.random_range(10.0..40.0)).collect();
            let hull = convex_hull(&hex);
            if hull.len() < 3 || polygon_area(&hull).unwrap() < 1.0 {
                continue;
            }
            let q = min_enclosing_quad(&hex).unwrap();
            let sweep_min = (0..180).map(|d| swept_box_area(&hex, (d as f64).to_radians())).fold(f64::INFINITY, f64::min);
            assert!(q.area() <= sweep_min + 1e-9, "{} > {}", q.area(), sweep_min);
            for p in &hex {
                assert!(q.contains(*p, 1e-6));
            }
        }
    }
}
