//! Detection scoring: one-to-one IoU matching with don't-care suppression,
//! precision, recall and Hmean.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{polygon_iou, Annotation, DEFAULT_IOU_SCALE};
use crate::par::{self, Execution};
use crate::postprocess::DetectedText;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DontCareRule {
    /// Drop a detection whose IoU with a don't-care region exceeds the
    /// matching threshold.
    #[default]
    Iou,
    /// Drop a detection when more than the threshold fraction of its own
    /// area lies inside a don't-care region.
    IntersectionOverDetection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub iou_thresh: f64,
    pub dont_care: DontCareRule,
    /// Raster sub-samples per pixel for polygon IoU.
    pub raster_scale: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { iou_thresh: 0.5, dont_care: DontCareRule::Iou, raster_scale: DEFAULT_IOU_SCALE }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub det: usize,
    pub gt: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub precision: f64,
    pub recall: f64,
    pub hmean: f64,
    pub matches: Vec<Match>,
    /// Detections left after don't-care suppression.
    pub num_dets: usize,
    /// Ground truths that are not don't-care.
    pub num_gts: usize,
}

impl EvalResult {
    pub fn true_positives(&self) -> usize {
        self.matches.len()
    }
}

/// Precision and recall from counts. With nothing on either side both are 1;
/// an empty side makes its ratio 0.
pub fn precision_recall(tp: usize, num_dets: usize, num_gts: usize) -> (f64, f64) {
    if num_dets == 0 && num_gts == 0 {
        return (1.0, 1.0);
    }
    let ratio = |n: usize| if n == 0 { 0.0 } else { tp as f64 / n as f64 };
    (ratio(num_dets), ratio(num_gts))
}

pub fn hmean(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn evaluate(dets: &[DetectedText], gts: &[Annotation], iou_thresh: f64) -> Result<EvalResult> {
    evaluate_with(dets, gts, &EvalConfig { iou_thresh, ..Default::default() })
}

fn boxes_overlap(a: [f64; 4], b: [f64; 4]) -> bool {
    a[0] < b[2] && b[0] < a[2] && a[1] < b[3] && b[1] < a[3]
}

pub fn evaluate_with(dets: &[DetectedText], gts: &[Annotation], cfg: &EvalConfig) -> Result<EvalResult> {
    let t = cfg.iou_thresh;
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::InvalidArgument(format!("iou threshold must be in (0, 1), got {t}")));
    }
    let scale = cfg.raster_scale;
    let iou = |d: &DetectedText, g: &Annotation| {
        if boxes_overlap(d.polygon.bbox(), g.polygon.bbox()) {
            polygon_iou(&d.polygon, &g.polygon, scale)
        } else {
            0.0
        }
    };

    let (care, dont): (Vec<usize>, Vec<usize>) = (0..gts.len()).partition(|&i| !gts[i].dont_care);
    let suppressed = |d: &DetectedText| {
        dont.iter().any(|&g| match cfg.dont_care {
            DontCareRule::Iou => iou(d, &gts[g]) > t,
            DontCareRule::IntersectionOverDetection => {
                let v = iou(d, &gts[g]);
                if v <= 0.0 {
                    return false;
                }
                // inter = iou * (a + b) / (1 + iou)
                let (a, b) = (d.polygon.area(), gts[g].polygon.area());
                v * (a + b) / (1.0 + v) / a > t
            }
        })
    };
    let kept: Vec<usize> = (0..dets.len()).filter(|&i| !suppressed(&dets[i])).collect();

    let mut pairs: Vec<Match> = Vec::new();
    for &d in &kept {
        for &g in &care {
            let v = iou(&dets[d], &gts[g]);
            if v >= t {
                pairs.push(Match { det: d, gt: g, iou: v });
            }
        }
    }
    pairs.sort_by(|a, b| b.iou.total_cmp(&a.iou).then(a.det.cmp(&b.det)).then(a.gt.cmp(&b.gt)));
    let mut det_used = vec![false; dets.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut matches = Vec::new();
    for m in pairs {
        if !det_used[m.det] && !gt_used[m.gt] {
            det_used[m.det] = true;
            gt_used[m.gt] = true;
            matches.push(m);
        }
    }
    let (precision, recall) = precision_recall(matches.len(), kept.len(), care.len());
    Ok(EvalResult { precision, recall, hmean: hmean(precision, recall), matches, num_dets: kept.len(), num_gts: care.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusResult {
    pub precision: f64,
    pub recall: f64,
    pub hmean: f64,
    pub true_positives: usize,
    pub num_dets: usize,
    pub num_gts: usize,
}

/// Sums true positives and detection/ground-truth counts over images.
pub fn aggregate(results: &[EvalResult]) -> CorpusResult {
    let tp = results.iter().map(EvalResult::true_positives).sum();
    let num_dets = results.iter().map(|r| r.num_dets).sum();
    let num_gts = results.iter().map(|r| r.num_gts).sum();
    let (precision, recall) = precision_recall(tp, num_dets, num_gts);
    CorpusResult { precision, recall, hmean: hmean(precision, recall), true_positives: tp, num_dets, num_gts }
}

/// Evaluates each `(detections, ground truth)` image; results keep input order.
pub fn evaluate_corpus(
    exec: Execution,
    images: &[(Vec<DetectedText>, Vec<Annotation>)],
    cfg: &EvalConfig,
) -> Result<(CorpusResult, Vec<EvalResult>)> {
    let per_image: Vec<EvalResult> = par::map(exec, images, |(d, g)| evaluate_with(d, g, cfg)).into_iter().collect::<Result<_>>()?;
    Ok((aggregate(&per_image), per_image))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Point, Polygon};
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
        Polygon::new(vec![Point::new(x0, y0), Point::new(x1, y0), Point::new(x1, y1), Point::new(x0, y1)]).unwrap()
    }

    fn det(x0: f64, y0: f64, x1: f64, y1: f64) -> DetectedText {
        DetectedText { polygon: rect(x0, y0, x1, y1), score: 1.0 }
    }

    fn gt(x0: f64, y0: f64, x1: f64, y1: f64, text: &str) -> Annotation {
        Annotation::new(rect(x0, y0, x1, y1), text)
    }

    #[test]
    fn exact_match_is_perfect() {
        let r = evaluate(&[det(0., 0., 40., 10.)], &[gt(0., 0., 40., 10., "a")], 0.5).unwrap();
        assert_eq!((r.precision, r.recall, r.hmean), (1.0, 1.0, 1.0));
        assert_eq!(r.matches.len(), 1);
    }

    #[test]
    fn dont_care_detection_is_removed() {
        let gts = [gt(0., 0., 40., 10., "a"), gt(100., 0., 140., 10., "###")];
        let r = evaluate(&[det(0., 0., 40., 10.), det(101., 0., 140., 10.)], &gts, 0.5).unwrap();
        assert_eq!((r.precision, r.recall), (1.0, 1.0));
        assert_eq!(r.num_dets, 1);
        assert_eq!(r.num_gts, 1);
        let cfg = EvalConfig { dont_care: DontCareRule::IntersectionOverDetection, ..Default::default() };
        // Small detection fully inside the region: low IoU but fully covered.
        let r = evaluate_with(&[det(0., 0., 40., 10.), det(110., 2., 120., 8.)], &gts, &cfg).unwrap();
        assert_eq!(r.num_dets, 1);
        assert_eq!(evaluate(&[det(0., 0., 40., 10.), det(110., 2., 120., 8.)], &gts, 0.5).unwrap().num_dets, 2);
    }

    #[test]
    fn empty_sides() {
        let r = evaluate(&[], &[], 0.5).unwrap();
        assert_eq!((r.precision, r.recall, r.hmean), (1.0, 1.0, 1.0));
        let r = evaluate(&[det(0., 0., 4., 4.)], &[], 0.5).unwrap();
        assert_eq!((r.precision, r.recall, r.hmean), (0.0, 0.0, 0.0));
        let r = evaluate(&[], &[gt(0., 0., 4., 4., "a")], 0.5).unwrap();
        assert_eq!((r.precision, r.recall), (0.0, 0.0));
        assert!(evaluate(&[], &[], 1.0).is_err());
    }

    #[test]
    fn greedy_prefers_highest_iou() {
        let gts = [gt(0., 0., 40., 10., "a"), gt(30., 0., 70., 10., "b")];
        let dets = [det(2., 0., 40., 10.), det(0., 0., 40., 10.)];
        let r = evaluate(&dets, &gts, 0.5).unwrap();
        assert_eq!(r.matches.len(), 1);
        assert_eq!((r.matches[0].det, r.matches[0].gt), (1, 0));
    }

    #[test]
    fn corpus_sums_counts() {
        let a = evaluate(&[det(0., 0., 40., 10.)], &[gt(0., 0., 40., 10., "a")], 0.5).unwrap();
        let b = evaluate(&[det(0., 0., 40., 10.), det(0., 50., 40., 60.)], &[gt(0., 0., 40., 10., "a")], 0.5).unwrap();
        let c = aggregate(&[a, b]);
        assert_eq!((c.true_positives, c.num_dets, c.num_gts), (2, 3, 2));
        assert!((c.precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(c.recall, 1.0);
    }

    fn scene(seed: u64) -> (Vec<DetectedText>, Vec<Annotation>) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gts: Vec<Annotation> = (0..6).map(|i| gt(0., 20. * i as f64, 60., 20. * i as f64 + 12., "w")).collect();
        let dets = (0..8)
            .map(|_| {
                let (x, y) = (rng.random_range(-5.0..5.0), rng.random_range(0.0..110.0));
                det(x, y, x + 60.0, y + 12.0)
            })
            .collect();
        (dets, gts)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn detection_order_is_irrelevant(seed in any::<u64>()) {
            let (mut dets, gts) = scene(seed);
            let a = evaluate(&dets, &gts, 0.5).unwrap();
            dets.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
            let b = evaluate(&dets, &gts, 0.5).unwrap();
            prop_assert_eq!((a.precision, a.recall), (b.precision, b.recall));
        }

        #[test]
        fn duplicate_of_match_lowers_precision_only(seed in any::<u64>()) {
            let (mut dets, gts) = scene(seed);
            let a = evaluate(&dets, &gts, 0.5).unwrap();
            prop_assume!(!a.matches.is_empty());
            dets.push(dets[a.matches[0].det].clone());
            let b = evaluate(&dets, &gts, 0.5).unwrap();
            prop_assert!(b.precision < a.precision);
            prop_assert_eq!(b.recall, a.recall);
        }

        #[test]
        fn hmean_is_symmetric(p in 0.0f64..1.0, r in 0.0f64..1.0) {
            prop_assert_eq!(hmean(p, r), hmean(r, p));
        }
    }
}
