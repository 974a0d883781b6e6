//! Timing of the decoding pipeline, stage by stage.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::MapBundle;
use crate::par::{self, Execution};
use crate::postprocess::{detect_timed, DetectConfig, StageTimes};

pub const WARMUP_ITERS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
}

impl StageStats {
    /// Nearest-rank statistics; `samples` must be non-empty.
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) };
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Self { mean_ms: s.iter().sum::<f64>() / n as f64, median_ms: median, p95_ms: s[rank - 1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    #[serde(flatten)]
    pub stats: StageStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub images: usize,
    pub iters: usize,
    pub warmup: usize,
    pub stages: Vec<StageReport>,
    /// Whole post-processing time per image.
    pub total: StageStats,
    pub instances_per_image: f64,
    pub images_per_sec: f64,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Runs `detect` over every bundle `warmup` times untimed (at least once,
/// which also counts instances), then `iters` times timed. One sample is
/// one (iteration, image) pair. Everything runs on the calling thread
/// regardless of `cfg.exec`.
pub fn bench(bundles: &[MapBundle], cfg: &DetectConfig, iters: usize, warmup: usize) -> Result<BenchReport> {
    if bundles.is_empty() {
        return Err(Error::InvalidArgument("bench needs at least one map bundle".into()));
    }
    if iters == 0 {
        return Err(Error::InvalidArgument("iters must be at least 1".into()));
    }
    let cfg = DetectConfig { exec: Execution::Sequential, ..*cfg };
    par::single_threaded(|| {
        let mut instances = 0usize;
        for b in bundles {
            instances += detect_timed(b, &cfg)?.0.len();
        }
        for _ in 1..warmup {
            for b in bundles {
                detect_timed(b, &cfg)?;
            }
        }
        let mut samples: Vec<StageTimes> = Vec::with_capacity(iters * bundles.len());
        for _ in 0..iters {
            for b in bundles {
                samples.push(detect_timed(b, &cfg)?.1);
            }
        }
        let stages = StageTimes::NAMES
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let v: Vec<f64> = samples.iter().map(|t| ms(t.as_array()[k])).collect();
                StageReport { stage: name.to_string(), stats: StageStats::from_samples(&v) }
            })
            .collect();
        let totals: Vec<f64> = samples.iter().map(|t| ms(t.total())).collect();
        let total = StageStats::from_samples(&totals);
        let images_per_sec = if total.mean_ms > 0.0 { 1e3 / total.mean_ms } else { f64::INFINITY };
        Ok(BenchReport {
            images: bundles.len(),
            iters,
            warmup: warmup.max(1),
            stages,
            total,
            instances_per_image: instances as f64 / bundles.len() as f64,
            images_per_sec,
        })
    })
}
