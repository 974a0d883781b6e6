//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid arguments or data, 2 filesystem errors.
//! Diagnostics go to stderr; results go to `--out` targets or stdout as
//! JSON. Every subcommand computes its full result before writing anything.

mod corpus;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bench::{bench, WARMUP_ITERS};
use crate::checks::{check_all, check_op_corrupted, CheckedOp, OpCheck, DEFAULT_EPS, DEFAULT_SEEDS, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::eval::{evaluate_corpus, DontCareRule, EvalConfig};
use crate::geom::{format_annotations, parse_annotations};
use crate::labels::{gen_bundle, BundleMeta, LabelConfig, DEFAULT_SHRINK_RATIO};
use crate::par::{self, Execution};
use crate::postprocess::{detect, detections_from_json, detections_to_json, Baseline, DetectConfig, ReconstructOptions, TboSampling};
use crate::synth::{corrupt, gen_scene, scene_rng, CorruptionSpec, SceneKind, SceneSpec};

use corpus::{bundle_dirs, read_text, write_text, Item};

#[derive(Debug, Parser)]
#[command(name = "textgeom", version, about = "Label maps, decoding, evaluation and numerics for offset-map text detection")]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Spread per-image work over threads, or keep it on one.
    #[arg(long, value_enum, default_value_t = Execution::Parallel, global = true)]
    exec: Execution,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render TCL/TCO/TVO/TBO maps for one annotation file.
    GenLabels(GenLabelsArgs),
    /// Decode a map bundle (or a directory of bundles) into polygons.
    Detect(DetectArgs),
    /// Score detections against ground truth.
    Eval(EvalArgs),
    /// Write seeded synthetic scenes with their map bundles.
    Synth(SynthArgs),
    /// Finite-difference checks of the analytic gradients.
    Gradcheck(GradcheckArgs),
    /// Time the decoding stages single-threaded.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct GenLabelsArgs {
    /// Annotation file, one `x1,y1,...,xn,yn,text` line per instance.
    #[arg(long)]
    ann: PathBuf,
    /// Input image height in pixels.
    #[arg(long)]
    height: usize,
    /// Input image width in pixels.
    #[arg(long)]
    width: usize,
    #[arg(long, default_value_t = crate::DEFAULT_STRIDE)]
    stride: usize,
    /// TCL shrink ratio.
    #[arg(long, default_value_t = DEFAULT_SHRINK_RATIO)]
    shrink: f64,
    /// Output directory for the `.smap` maps and `meta.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    #[arg(long, default_value_t = 0.5)]
    tcl_thresh: f64,
    #[arg(long, default_value_t = 0.3)]
    nms_iou: f64,
    /// Instances with fewer TCL pixels are dropped.
    #[arg(long, default_value_t = 5)]
    min_pixels: usize,
    /// Pixel clustering: point-to-quad assignment or connected components.
    #[arg(long, value_enum, default_value_t = Baseline::P2q)]
    baseline: Baseline,
    #[arg(long, value_enum, default_value_t = TboSampling::Nearest)]
    tbo_sampling: TboSampling,
    /// Drop TCL pixels whose predicted center is farther than this many map
    /// pixels from every kept quad (default: no limit).
    #[arg(long)]
    max_assign_dist: Option<f64>,
}

impl DecodeArgs {
    fn config(&self) -> Result<DetectConfig> {
        let cfg = DetectConfig {
            tcl_thresh: self.tcl_thresh,
            nms_iou: self.nms_iou,
            min_pixels: self.min_pixels,
            baseline: self.baseline,
            max_assign_dist: self.max_assign_dist.unwrap_or(f64::INFINITY),
            reconstruct: ReconstructOptions { sampling: self.tbo_sampling, ..ReconstructOptions::default() },
            exec: Execution::Sequential,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct DetectArgs {
    /// A bundle directory, or a directory whose subdirectories are bundles.
    #[arg(long)]
    maps: PathBuf,
    #[command(flatten)]
    decode: DecodeArgs,
    /// Detections JSON file for one bundle; a directory of `<name>.json`
    /// files for a corpus.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Detections JSON file, or a directory of `<name>.json` files.
    #[arg(long)]
    det: PathBuf,
    /// Annotation file, or a directory of `<name>.txt` files.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    #[arg(long, value_enum, default_value_t = DontCareRule::Iou)]
    dont_care: DontCareRule,
    /// Also write the report here (it is always printed).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    n_scenes: usize,
    #[arg(long, value_enum, default_value_t = SceneKind::Quad)]
    kind: SceneKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 512)]
    height: usize,
    #[arg(long, default_value_t = 512)]
    width: usize,
    /// Text instances per scene.
    #[arg(long, default_value_t = 5)]
    instances: usize,
    /// Minimum gap between instances in input pixels.
    #[arg(long, default_value_t = 10.0)]
    min_gap: f64,
    /// Ribbon bend amplitude as a fraction of length.
    #[arg(long, default_value_t = 0.08)]
    curvature: f64,
    /// Gaussian noise added to the TCL map.
    #[arg(long, default_value_t = 0.0)]
    tcl_noise: f64,
    /// Gaussian noise (map px) added to every offset channel.
    #[arg(long, default_value_t = 0.0)]
    offset_noise: f64,
    /// Cut each long TCL region into this many pieces (0 = no cuts).
    #[arg(long, default_value_t = 0)]
    fragments: usize,
    /// Width of each cut in input pixels.
    #[arg(long, default_value_t = 5.0)]
    fragment_gap: f64,
    /// Only TCL regions at least this long (input px) are cut.
    #[arg(long, default_value_t = 0.0)]
    fragment_min_length: f64,
    /// Keep the instances that fit when a scene cannot hold `--instances`
    /// (otherwise that is an error).
    #[arg(long)]
    allow_partial: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Op to check; all of them when omitted.
    #[arg(long, value_enum)]
    module: Option<CheckedOp>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Consecutive seeds per op, starting at `--seed`.
    #[arg(long, default_value_t = DEFAULT_SEEDS)]
    seeds: usize,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    eps: f64,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Double every analytic gradient; the run passes when every check fails.
    #[arg(long)]
    negative_control: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// A bundle directory, or a directory whose subdirectories are bundles.
    #[arg(long)]
    maps: PathBuf,
    #[arg(long, default_value_t = 20)]
    iters: usize,
    #[arg(long, default_value_t = WARMUP_ITERS)]
    warmup: usize,
    #[command(flatten)]
    decode: DecodeArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run(argv: Vec<OsString>) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging(cli.verbose);
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).target(env_logger::Target::Stderr).try_init();
}

fn dispatch(cli: Cli) -> Result<()> {
    let exec = cli.exec;
    match cli.command {
        Command::GenLabels(a) => gen_labels_cmd(a, exec),
        Command::Detect(a) => detect_cmd(a, exec),
        Command::Eval(a) => eval_cmd(a, exec),
        Command::Synth(a) => synth_cmd(a, exec),
        Command::Gradcheck(a) => gradcheck_cmd(a),
        Command::Bench(a) => bench_cmd(a),
    }
}

fn to_json(v: &impl Serialize) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

fn emit(json: &str, out: Option<&Path>) -> Result<()> {
    if let Some(path) = out {
        write_text(path, json)?;
    }
    print!("{json}");
    Ok(())
}

fn gen_labels_cmd(a: GenLabelsArgs, exec: Execution) -> Result<()> {
    let cfg = LabelConfig { stride: a.stride, shrink_ratio: a.shrink, exec };
    if a.height == 0 || a.width == 0 || a.stride == 0 || !(a.shrink > 0.0 && a.shrink < 0.5) {
        return Err(Error::InvalidArgument("height, width and stride must be positive and shrink in (0, 0.5)".into()));
    }
    let anns = parse_annotations(&read_text(&a.ann)?)?;
    let (bundle, report) = gen_bundle(&anns, a.height, a.width, &cfg)?;
    let meta = BundleMeta { height: a.height, width: a.width, stride: a.stride, shrink_ratio: a.shrink };
    bundle.save(&a.out, &meta)?;
    print!("{}", to_json(&report));
    Ok(())
}

fn detect_cmd(a: DetectArgs, exec: Execution) -> Result<()> {
    let cfg = a.decode.config()?;
    let items = bundle_dirs(&a.maps)?;
    let results = par::map(exec, &items, |it| -> Result<String> {
        let (bundle, _) = crate::labels::MapBundle::load(&it.path)?;
        Ok(detections_to_json(&detect(&bundle, &cfg)?))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    match items.as_slice() {
        [Item { single: true, .. }] => write_text(&a.out, &results[0]),
        _ => {
            fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
            for (it, json) in items.iter().zip(&results) {
                write_text(&a.out.join(format!("{}.json", it.name)), json)?;
            }
            log::info!("wrote {} detection files to {}", items.len(), a.out.display());
            Ok(())
        }
    }
}

#[derive(Debug, Serialize)]
struct ImageScore {
    name: String,
    precision: f64,
    recall: f64,
    hmean: f64,
    true_positives: usize,
    num_dets: usize,
    num_gts: usize,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    iou: f64,
    precision: f64,
    recall: f64,
    hmean: f64,
    true_positives: usize,
    num_dets: usize,
    num_gts: usize,
    per_image: Vec<ImageScore>,
}

fn eval_cmd(a: EvalArgs, exec: Execution) -> Result<()> {
    if !(a.iou > 0.0 && a.iou < 1.0) {
        return Err(Error::InvalidArgument(format!("iou must be in (0, 1), got {}", a.iou)));
    }
    let cfg = EvalConfig { iou_thresh: a.iou, dont_care: a.dont_care, ..EvalConfig::default() };
    let pairs = corpus::eval_pairs(&a.det, &a.gt)?;
    let mut images = Vec::with_capacity(pairs.len());
    for (_, det, gt) in &pairs {
        images.push((detections_from_json(&read_text(det)?)?, parse_annotations(&read_text(gt)?)?));
    }
    let (total, per) = evaluate_corpus(exec, &images, &cfg)?;
    let report = EvalReport {
        iou: a.iou,
        precision: total.precision,
        recall: total.recall,
        hmean: total.hmean,
        true_positives: total.true_positives,
        num_dets: total.num_dets,
        num_gts: total.num_gts,
        per_image: pairs
            .iter()
            .zip(&per)
            .map(|((name, _, _), r)| ImageScore {
                name: name.clone(),
                precision: r.precision,
                recall: r.recall,
                hmean: r.hmean,
                true_positives: r.true_positives(),
                num_dets: r.num_dets,
                num_gts: r.num_gts,
            })
            .collect(),
    };
    emit(&to_json(&report), a.out.as_deref())
}

#[derive(Debug, Serialize)]
struct SceneEntry {
    name: String,
    seed: u64,
    instances: usize,
    annotations: String,
    maps: String,
}

#[derive(Debug, Serialize)]
struct Manifest {
    seed: u64,
    kind: SceneKind,
    n_scenes: usize,
    height: usize,
    width: usize,
    stride: usize,
    shrink_ratio: f64,
    corruption: CorruptionSpec,
    scenes: Vec<SceneEntry>,
}

fn synth_cmd(a: SynthArgs, exec: Execution) -> Result<()> {
    let base = SceneSpec {
        seed: a.seed,
        height: a.height,
        width: a.width,
        n_instances: a.instances,
        kind: a.kind,
        min_gap: a.min_gap,
        curvature: a.curvature,
    };
    base.validate()?;
    let corruption = CorruptionSpec {
        tcl_noise_sigma: a.tcl_noise,
        offset_noise_sigma: a.offset_noise,
        n_fragments: a.fragments,
        fragment_gap: a.fragment_gap,
        fragment_min_length: a.fragment_min_length,
    };
    corruption.validate()?;
    let label_cfg = LabelConfig::default();
    let scenes = par::map_range(exec, a.n_scenes, |i| -> Result<_> {
        use rand::Rng;
        let seed: u64 = scene_rng(a.seed, i as u64).random();
        let spec = SceneSpec { seed, ..base };
        let anns = match gen_scene(&spec) {
            Err(Error::SceneInfeasible { partial, requested }) if a.allow_partial => {
                log::warn!("scene {i}: placed {} of {requested} instances", partial.len());
                partial
            }
            other => other?,
        };
        let (clean, _) = gen_bundle(&anns, spec.height, spec.width, &label_cfg)?;
        let bundle = corrupt(&clean, &corruption, seed)?;
        Ok((format!("scene_{i:04}"), seed, anns, bundle))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let meta = BundleMeta { height: a.height, width: a.width, stride: label_cfg.stride, shrink_ratio: label_cfg.shrink_ratio };
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut entries = Vec::with_capacity(scenes.len());
    for (name, seed, anns, bundle) in &scenes {
        write_text(&a.out.join(format!("{name}.txt")), &format_annotations(anns))?;
        bundle.save(&a.out.join(name), &meta)?;
        entries.push(SceneEntry {
            name: name.clone(),
            seed: *seed,
            instances: anns.len(),
            annotations: format!("{name}.txt"),
            maps: name.clone(),
        });
    }
    let manifest = Manifest {
        seed: a.seed,
        kind: a.kind,
        n_scenes: a.n_scenes,
        height: a.height,
        width: a.width,
        stride: meta.stride,
        shrink_ratio: meta.shrink_ratio,
        corruption,
        scenes: entries,
    };
    write_text(&a.out.join("manifest.json"), &to_json(&manifest))
}

#[derive(Debug, Serialize)]
struct GradcheckReport {
    negative_control: bool,
    /// Without `--negative-control`: every check passed. With it: every
    /// check failed, i.e. the checker caught every corrupted gradient.
    passed: bool,
    checks: Vec<OpCheck>,
}

fn gradcheck_cmd(a: GradcheckArgs) -> Result<()> {
    if a.seeds == 0 || !(a.eps > 0.0) || !(a.tol > 0.0) {
        return Err(Error::InvalidArgument("seeds, eps and tol must be positive".into()));
    }
    let ops: Vec<CheckedOp> = a.module.map_or_else(|| CheckedOp::ALL.to_vec(), |m| vec![m]);
    let checks = if a.negative_control {
        let mut v = Vec::new();
        for &op in &ops {
            for s in a.seed..a.seed + a.seeds as u64 {
                v.push(check_op_corrupted(op, s, a.eps, a.tol)?);
            }
        }
        v
    } else {
        check_all(&ops, a.seed, a.seeds, a.eps, a.tol)?
    };
    let passed = checks.iter().all(|c| c.passed != a.negative_control);
    emit(&to_json(&GradcheckReport { negative_control: a.negative_control, passed, checks }), a.out.as_deref())?;
    if passed {
        Ok(())
    } else {
        Err(Error::Numeric("gradient check failed".into()))
    }
}

fn bench_cmd(a: BenchArgs) -> Result<()> {
    let cfg = a.decode.config()?;
    if a.iters == 0 {
        return Err(Error::InvalidArgument("iters must be at least 1".into()));
    }
    let bundles = bundle_dirs(&a.maps)?.iter().map(|it| Ok(crate::labels::MapBundle::load(&it.path)?.0)).collect::<Result<Vec<_>>>()?;
    let report = bench(&bundles, &cfg, a.iters, a.warmup)?;
    emit(&to_json(&report), a.out.as_deref())
}
