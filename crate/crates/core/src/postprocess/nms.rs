use std::cmp::Ordering;

use super::QuadCandidate;
use crate::error::{Error, Result};
use crate::geom::{quad_iou, Point, Quad};

/// Descending score, then smaller center `y`, then smaller center `x`.
pub(crate) fn rank(a: &QuadCandidate, b: &QuadCandidate) -> Ordering {
    b.score.total_cmp(&a.score).then(a.center.y.total_cmp(&b.center.y)).then(a.center.x.total_cmp(&b.center.x))
}

/// One NMS survivor and the candidates it absorbed, as indices into the
/// input. `members[0] == keeper`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NmsGroup {
    pub keeper: usize,
    pub members: Vec<usize>,
}

/// Greedy selection: in [`rank`] order, a candidate survives iff its IoU
/// with every earlier survivor is below `iou_thresh`; otherwise it joins the
/// first survivor it overlaps.
pub fn nms_groups(cands: &[QuadCandidate], iou_thresh: f64) -> Result<Vec<NmsGroup>> {
    if !(iou_thresh > 0.0 && iou_thresh < 1.0) {
        return Err(Error::InvalidArgument(format!("nms iou must be in (0, 1), got {iou_thresh}")));
    }
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| rank(&cands[a], &cands[b]));
    let mut groups: Vec<NmsGroup> = Vec::new();
    'next: for i in order {
        for g in groups.iter_mut() {
            if quad_iou(&cands[g.keeper].quad, &cands[i].quad) >= iou_thresh {
                g.members.push(i);
                continue 'next;
            }
        }
        groups.push(NmsGroup { keeper: i, members: vec![i] });
    }
    Ok(groups)
}

/// `q`'s vertices cyclically shifted to best match `reference`.
fn aligned(q: &Quad, reference: &Quad) -> [Point; 4] {
    let cost = |k: usize| (0..4).map(|i| q.v[(i + k) % 4].dist(reference.v[i]).powi(2)).sum::<f64>();
    let k = (0..4).min_by(|&a, &b| cost(a).total_cmp(&cost(b))).unwrap_or(0);
    std::array::from_fn(|i| q.v[(i + k) % 4])
}

/// Greedy NMS with merged representatives. Each survivor's score becomes
/// the mean score over its group, and its quad the score-weighted mean of
/// the group's quads (vertices matched up by cyclic order).
pub fn nms(cands: &[QuadCandidate], iou_thresh: f64) -> Result<Vec<QuadCandidate>> {
    Ok(nms_groups(cands, iou_thresh)?
        .into_iter()
        .map(|g| {
            let keeper = &cands[g.keeper];
            let score = g.members.iter().map(|&i| cands[i].score).sum::<f64>() / g.members.len() as f64;
            let wsum: f64 = g.members.iter().map(|&i| cands[i].score).sum();
            let weight = |i: usize| if wsum > 0.0 { cands[i].score / wsum } else { 1.0 / g.members.len() as f64 };
            let mut v = [Point::default(); 4];
            for &i in &g.members {
                let w = weight(i);
                for (acc, p) in v.iter_mut().zip(aligned(&cands[i].quad, &keeper.quad)) {
                    *acc = *acc + p * w;
                }
            }
            let quad = Quad::canonical(v).unwrap_or(keeper.quad);
            QuadCandidate::new(quad, score)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cand(x: f64, y: f64, w: f64, h: f64, score: f64) -> QuadCandidate {
        let q = Quad::canonical([Point::new(x, y), Point::new(x + w, y), Point::new(x + w, y + h), Point::new(x, y + h)]).unwrap();
        QuadCandidate::new(q, score)
    }

    #[test]
    fn identical_pair_merges_scores() {
        let kept = nms(&[cand(0., 0., 10., 4., 0.8), cand(0., 0., 10., 4., 0.9)], 0.3).unwrap();
        assert_eq!(kept.len(), 1);
        assert!((kept[0].score - 0.85).abs() < 1e-12);
    }

    #[test]
    fn representative_averages_aligned_vertices() {
        let a = cand(0., 0., 10., 4., 1.0);
        let mut b = cand(0., 2., 10., 4., 1.0);
        b.quad.v.rotate_left(1);
        let kept = nms(&[a, b], 0.3).unwrap();
        assert_eq!(kept.len(), 1);
        assert!((kept[0].quad.area() - 40.0).abs() < 1e-9);
        assert!(kept[0].center.dist(Point::new(5., 3.)) < 1e-9);
    }

    #[test]
    fn disjoint_quads_all_survive() {
        let c: Vec<_> = (0..6).map(|i| cand(20. * i as f64, 0., 10., 4., 0.5)).collect();
        assert_eq!(nms(&c, 0.3).unwrap().len(), 6);
        assert!(nms(&c, 0.0).is_err());
    }

    #[test]
    fn ties_prefer_upper_then_left() {
        let c = [cand(1., 1., 10., 4., 0.5), cand(0., 1., 10., 4., 0.5), cand(0., 0., 10., 4., 0.5)];
        let groups = nms_groups(&c, 0.3).unwrap();
        assert_eq!(groups, vec![NmsGroup { keeper: 2, members: vec![2, 1, 0] }]);
        let kept = nms(&c, 0.3).unwrap();
        assert!(kept[0].center.dist(Point::new(16. / 3., 8. / 3.)) < 1e-9);
    }

    proptest! {
        #[test]
        fn input_order_does_not_matter(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut c: Vec<_> = (0..40)
                .map(|_| cand(rng.random_range(0.0..60.0), rng.random_range(0.0..60.0), rng.random_range(2.0..20.0), rng.random_range(2.0..20.0), rng.random_range(0..5) as f64 / 4.0))
                .collect();
            let a = nms(&c, 0.3).unwrap();
            c.shuffle(&mut rng);
            prop_assert_eq!(a, nms(&c, 0.3).unwrap());
        }
    }
}
