use super::{convex_hull, signed_area, Point, Quad};

/// Area of the intersection of two convex outlines (Sutherland-Hodgman).
/// Both inputs must be clockwise-on-screen (positive signed area).
pub fn convex_intersection_area(subject: &[Point], clip: &[Point]) -> f64 {
    let mut poly: Vec<Point> = subject.to_vec();
    let mut next: Vec<Point> = Vec::with_capacity(subject.len() + clip.len());
    let m = clip.len();
    for i in 0..m {
        if poly.is_empty() {
            return 0.0;
        }
        let a = clip[i];
        let b = clip[(i + 1) % m];
        let edge = b - a;
        let side = |p: Point| edge.cross(p - a);
        next.clear();
        let n = poly.len();
        for j in 0..n {
            let cur = poly[j];
            let prev = poly[(j + n - 1) % n];
            let (sc, sp) = (side(cur), side(prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    next.push(prev.lerp(cur, sp / (sp - sc)));
                }
                next.push(cur);
            } else if sp >= 0.0 {
                next.push(prev.lerp(cur, sp / (sp - sc)));
            }
        }
        std::mem::swap(&mut poly, &mut next);
    }
    signed_area(&poly).abs()
}

/// Exact IoU of two quads, computed on their convex hulls.
///
/// Used where many candidate pairs must be compared (NMS); general polygons
/// go through the rasterized [`super::polygon_iou`].
pub fn quad_iou(a: &Quad, b: &Quad) -> f64 {
    let [ax0, ay0, ax1, ay1] = a.bbox();
    let [bx0, by0, bx1, by1] = b.bbox();
    if ax0 >= bx1 || bx0 >= ax1 || ay0 >= by1 || by0 >= ay1 {
        return 0.0;
    }
    let ha = convex_hull(&a.v);
    let hb = convex_hull(&b.v);
    let area_a = signed_area(&ha);
    let area_b = signed_area(&hb);
    let inter = convex_intersection_area(&ha, &hb);
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}
