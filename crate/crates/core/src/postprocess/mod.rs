//! Decoding predicted maps into text polygons.
//!
//! `detect` runs five stages: binarize the TCL map, restore one quad per
//! TCL pixel from TVO, NMS the quads, cluster TCL pixels onto the
//! survivors via TCO (or connected components, as a baseline), and rebuild
//! each cluster's outline from TBO.

mod assign;
mod nms;
mod reconstruct;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Point, Polygon, Quad};
use crate::labels::MapBundle;
use crate::par::{self, Execution};

pub use assign::{components_to_instances, connected_components, point_to_quad_assign};
pub use nms::{nms, nms_groups, NmsGroup};
pub use reconstruct::{reconstruct_polygon, ReconstructOptions, TboSampling};

/// Binary raster at map resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::Shape(format!("mask {height}x{width} needs {} bits, got {}", height * width, bits.len())));
        }
        Ok(Self { height, width, bits })
    }

    pub fn from_pixels(height: usize, width: usize, pixels: &[(usize, usize)]) -> Self {
        let mut bits = vec![false; height * width];
        for &(r, c) in pixels {
            bits[r * width + c] = true;
        }
        Self { height, width, bits }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.width + c]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Set pixels as `(row, col)` in raster order.
    pub fn pixels(&self) -> Vec<(usize, usize)> {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| (i / self.width, i % self.width)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadCandidate {
    pub quad: Quad,
    pub score: f64,
    pub center: Point,
}

impl QuadCandidate {
    pub fn new(quad: Quad, score: f64) -> Self {
        Self { quad, score, center: quad.center() }
    }
}

/// A cluster of TCL pixels (`(row, col)`, map coordinates) and the quad it
/// was assigned to.
#[derive(Debug, Clone, PartialEq)]
pub struct TextInstance {
    pub quad: QuadCandidate,
    pub pixels: Vec<(usize, usize)>,
}

/// A detection in input-image coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectedText {
    pub polygon: Polygon,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    /// Cluster by nearest NMS-surviving quad center.
    #[default]
    P2q,
    /// Cluster by 8-connected components of the TCL mask.
    Cc,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectConfig {
    pub tcl_thresh: f64,
    pub nms_iou: f64,
    pub min_pixels: usize,
    pub baseline: Baseline,
    /// Pixels whose predicted center is farther than this (map px) from
    /// every kept quad are dropped.
    pub max_assign_dist: f64,
    pub reconstruct: ReconstructOptions,
    pub exec: Execution,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            tcl_thresh: 0.5,
            nms_iou: 0.3,
            min_pixels: 5,
            baseline: Baseline::P2q,
            max_assign_dist: f64::INFINITY,
            reconstruct: ReconstructOptions::default(),
            exec: Execution::Sequential,
        }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tcl threshold", self.tcl_thresh), ("nms iou", self.nms_iou)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidArgument(format!("{name} must be in (0, 1), got {v}")));
            }
        }
        if !(self.max_assign_dist > 0.0) {
            return Err(Error::InvalidArgument("max assignment distance must be positive".into()));
        }
        Ok(())
    }
}

pub fn binarize_tcl(tcl: &crate::Tensor<f32>, threshold: f64) -> Result<Mask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!("threshold must be in (0, 1), got {threshold}")));
    }
    let [h, w, 1] = *tcl.shape() else {
        return Err(Error::Shape(format!("tcl must be [H, W, 1], got {:?}", tcl.shape())));
    };
    Mask::new(h, w, tcl.data().iter().map(|&v| v as f64 > threshold).collect())
}

/// One quad per masked pixel `p`, with vertices `p + tvo(p)` and the pixel's
/// TCL value as score. Quads under 1 px² (or otherwise invalid) are dropped.
pub fn propose_quads(mask: &Mask, bundle: &MapBundle) -> Vec<QuadCandidate> {
    mask.pixels()
        .into_iter()
        .filter_map(|(r, c)| {
            let p = Point::new(c as f64, r as f64);
            let quad = Quad::canonical(bundle.tvo_at(r, c).map(|d| p + d)).ok()?;
            (quad.area() >= 1.0).then(|| QuadCandidate::new(quad, (bundle.tcl_at(r, c) as f64).clamp(0.0, 1.0)))
        })
        .collect()
}

/// Wall time spent in each `detect` stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimes {
    pub binarize: Duration,
    pub propose: Duration,
    pub nms: Duration,
    pub assign: Duration,
    pub reconstruct: Duration,
}

impl StageTimes {
    pub const NAMES: [&'static str; 5] = ["binarize", "propose", "nms", "assign", "reconstruct"];

    pub fn as_array(&self) -> [Duration; 5] {
        [self.binarize, self.propose, self.nms, self.assign, self.reconstruct]
    }

    pub fn total(&self) -> Duration {
        self.as_array().iter().sum()
    }
}

pub fn detect(bundle: &MapBundle, cfg: &DetectConfig) -> Result<Vec<DetectedText>> {
    Ok(detect_timed(bundle, cfg)?.0)
}

/// [`detect`] plus per-stage timings. Instances whose outline cannot be
/// rebuilt are dropped with a warning.
pub fn detect_timed(bundle: &MapBundle, cfg: &DetectConfig) -> Result<(Vec<DetectedText>, StageTimes)> {
    cfg.validate()?;
    bundle.validate()?;
    let mut times = StageTimes::default();
    let mut clock = Instant::now();
    let mut lap = |slot: &mut Duration| {
        let now = Instant::now();
        *slot = now - clock;
        clock = now;
    };

    let mask = binarize_tcl(&bundle.tcl, cfg.tcl_thresh)?;
    lap(&mut times.binarize);
    let instances = match cfg.baseline {
        Baseline::P2q => {
            let cands = propose_quads(&mask, bundle);
            lap(&mut times.propose);
            let kept = nms(&cands, cfg.nms_iou)?;
            lap(&mut times.nms);
            let inst = point_to_quad_assign(&mask, bundle, &kept, cfg.min_pixels, cfg.max_assign_dist, cfg.exec)?;
            lap(&mut times.assign);
            inst
        }
        Baseline::Cc => {
            lap(&mut times.propose);
            lap(&mut times.nms);
            let comps = connected_components(&mask);
            let inst = components_to_instances(&comps, bundle, cfg.min_pixels);
            lap(&mut times.assign);
            inst
        }
    };
    let rebuilt = par::map(cfg.exec, &instances, |inst| reconstruct_polygon(inst, bundle, &cfg.reconstruct));
    let mut out = Vec::with_capacity(rebuilt.len());
    for r in rebuilt {
        match r {
            Ok(d) => out.push(d),
            Err(e) => log::warn!("dropping instance: {e}"),
        }
    }
    lap(&mut times.reconstruct);
    Ok((out, times))
}

#[derive(Serialize, Deserialize)]
struct DetectionRecord {
    polygon: Vec<[f64; 2]>,
    score: f64,
}

#[derive(Serialize, Deserialize)]
struct DetectionFile {
    detections: Vec<DetectionRecord>,
}

/// `{"detections":[{"polygon":[[x,y],...],"score":s},...]}`
pub fn detections_to_json(dets: &[DetectedText]) -> String {
    let file = DetectionFile {
        detections: dets
            .iter()
            .map(|d| DetectionRecord { polygon: d.polygon.points().iter().map(|p| [p.x, p.y]).collect(), score: d.score })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("detections serialize") + "\n"
}

pub fn detections_from_json(text: &str) -> Result<Vec<DetectedText>> {
    let file: DetectionFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    file.detections
        .into_iter()
        .map(|d| {
            let polygon = Polygon::new(d.polygon.into_iter().map(|[x, y]| Point::new(x, y)).collect())?;
            Ok(DetectedText { polygon, score: d.score })
        })
        .collect()
}
