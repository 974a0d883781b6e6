use std::collections::VecDeque;

use super::{Mask, QuadCandidate, TextInstance};
use crate::error::{Error, Result};
use crate::geom::{min_enclosing_quad, Point};
use crate::labels::MapBundle;
use crate::par::{self, Execution};

/// Clusters masked pixels by their predicted centers: pixel `p` goes to the
/// kept candidate whose center is nearest `p + tco(p)` (ties: lower index).
/// Pixels farther than `max_dist` from every center are dropped, as are
/// instances with fewer than `min_pixels` pixels.
pub fn point_to_quad_assign(
    mask: &Mask,
    bundle: &MapBundle,
    kept: &[QuadCandidate],
    min_pixels: usize,
    max_dist: f64,
    exec: Execution,
) -> Result<Vec<TextInstance>> {
    if (mask.height(), mask.width()) != (bundle.height(), bundle.width()) {
        return Err(Error::Shape(format!(
            "mask {}x{} does not match maps {}x{}",
            mask.height(),
            mask.width(),
            bundle.height(),
            bundle.width()
        )));
    }
    let pixels = mask.pixels();
    if kept.is_empty() {
        if !pixels.is_empty() {
            log::warn!("{} TCL pixels but no quad candidates; no instances", pixels.len());
        }
        return Ok(Vec::new());
    }
    let owners = par::map(exec, &pixels, |&(r, c)| {
        let target = Point::new(c as f64, r as f64) + bundle.tco_at(r, c);
        let (best, d2) = kept
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let d = k.center - target;
                (i, d.dot(d))
            })
            .fold((usize::MAX, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
        (d2.sqrt() <= max_dist).then_some(best)
    });
    let mut groups: Vec<Vec<(usize, usize)>> = vec![Vec::new(); kept.len()];
    for (p, owner) in pixels.into_iter().zip(owners) {
        if let Some(i) = owner {
            groups[i].push(p);
        }
    }
    Ok(kept
        .iter()
        .zip(groups)
        .filter(|(_, g)| !g.is_empty() && g.len() >= min_pixels)
        .map(|(k, pixels)| TextInstance { quad: *k, pixels })
        .collect())
}

/// 8-connected components, labelled in raster order of each component's
/// first pixel. Pixels within a component are in raster order.
pub fn connected_components(mask: &Mask) -> Vec<Vec<(usize, usize)>> {
    let (h, w) = (mask.height(), mask.width());
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !mask.bits()[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut comp = Vec::new();
        while let Some(i) = queue.pop_front() {
            let (r, c) = (i / w, i % w);
            comp.push((r, c));
            for nr in r.saturating_sub(1)..(r + 2).min(h) {
                for nc in c.saturating_sub(1)..(c + 2).min(w) {
                    let j = nr * w + nc;
                    if mask.bits()[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Turns components into instances for the baseline path: each quad is the
/// minimum-area rectangle around the component's pixel squares, scored by
/// mean TCL.
pub fn components_to_instances(comps: &[Vec<(usize, usize)>], bundle: &MapBundle, min_pixels: usize) -> Vec<TextInstance> {
    comps
        .iter()
        .filter(|c| !c.is_empty() && c.len() >= min_pixels)
        .filter_map(|c| {
            let corners: Vec<Point> = c
                .iter()
                .flat_map(|&(r, col)| {
                    let (x, y) = (col as f64, r as f64);
                    [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)].map(|(dx, dy)| Point::new(x + dx, y + dy))
                })
                .collect();
            let quad = min_enclosing_quad(&corners).ok()?;
            let score = c.iter().map(|&(r, col)| bundle.tcl_at(r, col) as f64).sum::<f64>() / c.len() as f64;
            Some(TextInstance { quad: QuadCandidate::new(quad, score.clamp(0.0, 1.0)), pixels: c.clone() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Quad;
    use proptest::prelude::*;

    fn rect_cand(cx: f64, cy: f64) -> QuadCandidate {
        let q = Quad::canonical([
            Point::new(cx - 5.0, cy - 1.0),
            Point::new(cx + 5.0, cy - 1.0),
            Point::new(cx + 5.0, cy + 1.0),
            Point::new(cx - 5.0, cy + 1.0),
        ])
        .unwrap();
        QuadCandidate::new(q, 1.0)
    }

    #[test]
    fn nearest_center_wins() {
        let mut b = MapBundle::zeros(5, 32, 4);
        b.tco.set(&[2, 12, 0], -7.0);
        let mask = Mask::from_pixels(5, 32, &[(2, 12)]);
        let kept = [rect_cand(5.0, 2.0), rect_cand(25.0, 2.0)];
        let inst = point_to_quad_assign(&mask, &b, &kept, 1, f64::INFINITY, Execution::Sequential).unwrap();
        assert_eq!(inst.len(), 1);
        assert_eq!(inst[0].quad.center, Point::new(5.0, 2.0));
        b.tco.set(&[2, 12, 0], -3.0);
        assert!(point_to_quad_assign(&mask, &b, &kept, 1, 1.0, Execution::Sequential).unwrap().is_empty());
        assert!(point_to_quad_assign(&mask, &b, &[], 1, f64::INFINITY, Execution::Sequential).unwrap().is_empty());
    }

    #[test]
    fn equal_distance_goes_to_lower_index() {
        let b = MapBundle::zeros(5, 32, 4);
        let mask = Mask::from_pixels(5, 32, &[(2, 15)]);
        let kept = [rect_cand(25.0, 2.0), rect_cand(5.0, 2.0)];
        let inst = point_to_quad_assign(&mask, &b, &kept, 1, f64::INFINITY, Execution::Sequential).unwrap();
        assert_eq!(inst[0].quad.center, Point::new(25.0, 2.0));
    }

    #[test]
    fn components_examples() {
        let mut px: Vec<(usize, usize)> = (0..3).flat_map(|r| (0..3).map(move |c| (r, c))).collect();
        px.extend((3..6).flat_map(|r| (3..6).map(move |c| (r, c))));
        assert_eq!(connected_components(&Mask::from_pixels(8, 8, &px)).len(), 1);
        let mut px: Vec<(usize, usize)> = (0..3).flat_map(|r| (0..3).map(move |c| (r, c))).collect();
        px.extend((0..3).flat_map(|r| (4..7).map(move |c| (r, c))));
        let comps = connected_components(&Mask::from_pixels(8, 8, &px));
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0][0], (0, 0));
        assert_eq!(comps[1][0], (0, 4));
    }

    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }

    /// Two-pass labelling with union-find over the forward 8-neighbourhood.
    fn union_find_count(m: &Mask) -> usize {
        let (h, w) = (m.height(), m.width());
        let mut parent: Vec<usize> = (0..h * w).collect();
        for r in 0..h {
            for c in 0..w {
                if !m.get(r, c) {
                    continue;
                }
                let neighbours = [(0i64, 1i64), (1, -1), (1, 0), (1, 1)];
                for (dr, dc) in neighbours {
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr < h as i64 && nc >= 0 && nc < w as i64 && m.get(nr as usize, nc as usize) {
                        let a = find(&mut parent, r * w + c);
                        let b = find(&mut parent, nr as usize * w + nc as usize);
                        parent[a] = b;
                    }
                }
            }
        }
        (0..h * w).filter(|&i| m.bits()[i] && find(&mut parent, i) == i).count()
    }

    proptest! {
        #[test]
        fn component_count_matches_union_find(bits in proptest::collection::vec(any::<bool>(), 12 * 15)) {
            let m = Mask::new(12, 15, bits).unwrap();
            let comps = connected_components(&m);
            prop_assert_eq!(comps.len(), union_find_count(&m));
            prop_assert_eq!(comps.iter().map(Vec::len).sum::<usize>(), m.count());
        }

        #[test]
        fn assignment_partitions_pixels(bits in proptest::collection::vec(any::<bool>(), 10 * 30), seed in 0u64..1000) {
            let m = Mask::new(10, 30, bits).unwrap();
            let mut b = MapBundle::zeros(10, 30, 4);
            for (i, v) in b.tco.data_mut().iter_mut().enumerate() {
                *v = (((i as u64 * 2654435761 + seed) % 200) as f32 - 100.0) / 10.0;
            }
            let kept = [rect_cand(5.0, 3.0), rect_cand(15.0, 6.0), rect_cand(26.0, 4.0)];
            let seq = point_to_quad_assign(&m, &b, &kept, 0, f64::INFINITY, Execution::Sequential).unwrap();
            let par = point_to_quad_assign(&m, &b, &kept, 0, f64::INFINITY, Execution::Parallel).unwrap();
            prop_assert_eq!(&seq, &par);
            let mut all: Vec<_> = seq.iter().flat_map(|i| i.pixels.clone()).collect();
            all.sort_unstable();
            let n = all.len();
            all.dedup();
            prop_assert_eq!(all.len(), n);
            prop_assert_eq!(n, m.count());
        }
    }
}
