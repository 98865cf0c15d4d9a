//! Command-line front end. Every command prints one `key=value` summary line and writes
//! its full results to files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::data_io::{
    self, read_calibration, read_category_mapping, read_depth_png, read_gravity, read_image_png, read_label_png,
    read_pfm, write_depth_png, write_gray_png, write_image_png, write_label_png, write_pfm,
};
use crate::error::{Error, Result};
use crate::grid::{DepthMap, InverseDepthMap};
use crate::metrics::{aggregate, error_map, evaluate, CropMode, EvalOptions, MetricReport};
use crate::refiner::{parse_vertical, refine, RefineInputs, RefinementConfig, Supervision};
use crate::semantics::{CategoryMapping, CategorySet};
use crate::sigl::sigl_total;
use crate::synthetic::{add_depth_noise, DepthNoise, PlanarScene};
use crate::warp::{FrameSequence, TemporalWindow};

/// Exit status for malformed input, configuration or files.
pub const EXIT_INPUT: i32 = 2;
/// Exit status for NaN/inf during computation.
pub const EXIT_NUMERICAL: i32 = 3;

pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_INPUT
    }
}

#[derive(Debug, Parser)]
#[command(name = "geosup", version, about = "Gravity-aware geometric losses for depth maps")]
pub struct Cli {
    /// Key-value refinement/loss configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a planar scene file to depth, labels and images.
    Synth(SynthArgs),
    /// Evaluate the geometric losses on a depth map.
    Loss(LossArgs),
    /// Refine a depth map against photometric and geometric terms.
    Refine(RefineArgs),
    /// Compare predicted and ground-truth depth directories.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    pub scene: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Relative Gaussian noise added to a copy of the depth (`depth_noisy.pfm`).
    #[arg(long)]
    pub noise: Option<f64>,
    /// Fraction of pixels dropped from the sparse depth copy (`depth_sparse.png`).
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SiglArgs {
    /// Categories to constrain, e.g. `flat,construction` or `V+C+F`.
    #[arg(long)]
    pub categories: Option<String>,
    /// Vertical-plane directions `K`, or `exact`.
    #[arg(long)]
    pub directions: Option<String>,
    #[arg(long)]
    pub hp_weight: Option<f64>,
    #[arg(long)]
    pub vp_weight: Option<f64>,
    /// Category mapping file; defaults to the built-in CityScapes grouping.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    /// Depth map (`.png` 16-bit or `.pfm`).
    #[arg(long)]
    pub depth: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub calib: PathBuf,
    #[arg(long)]
    pub gravity: Option<PathBuf>,
    #[command(flatten)]
    pub sigl: SiglArgs,
    /// Per-region CSV output.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    /// Initial depth (`.png` or `.pfm`).
    #[arg(long)]
    pub init: PathBuf,
    #[arg(long)]
    pub calib: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub gravity: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub left: Option<PathBuf>,
    #[arg(long)]
    pub right: Option<PathBuf>,
    #[arg(long)]
    pub baseline: Option<f64>,
    /// Frame images for monocular supervision, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub frames: Vec<PathBuf>,
    /// Pose file for `--frames`.
    #[arg(long)]
    pub poses: Option<PathBuf>,
    /// Index of the reference frame in `--frames`.
    #[arg(long, default_value_t = 0)]
    pub reference: usize,
    /// Weight overrides: `photometric=1,smoothness=0.1,hp=0.5,vp=0.5` or `sigl=0`.
    #[arg(long)]
    pub weights: Option<String>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Ground-truth depth for reporting AbsRel before and after.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[command(flatten)]
    pub sigl: SiglArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred_dir: PathBuf,
    #[arg(long)]
    pub gt_dir: PathBuf,
    #[arg(long, default_value_t = 80.0)]
    pub cap: f64,
    /// `full`, `garg` or `top,bottom,left,right` fractions.
    #[arg(long, default_value = "full")]
    pub crop: String,
    /// Keep ground-truth pixels deeper than the cap.
    #[arg(long)]
    pub keep_far_gt: bool,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Directory for per-image error-map PNGs.
    #[arg(long)]
    pub error_maps: Option<PathBuf>,
}

/// Runs a parsed command and returns its summary line.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Loss(a) => cmd_loss(a, cli.config.as_deref()),
        Command::Refine(a) => cmd_refine(a, cli.config.as_deref()),
        Command::Eval(a) => cmd_eval(a),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Depth from a 16-bit PNG or a PFM, chosen by extension.
pub fn read_depth_any(path: &Path) -> Result<DepthMap> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => read_depth_png(path),
        Some("pfm") => {
            let (w, h, v) = read_pfm(path)?;
            DepthMap::from_vec(w, h, v)
        }
        _ => Err(Error::Format {
            path: path.to_path_buf(),
            message: "depth must be a .png or .pfm file".into(),
        }),
    }
}

fn inverse_depth_preview(path: &Path, depth: &DepthMap) -> Result<()> {
    let inv: Vec<f64> = depth
        .data()
        .iter()
        .map(|&z| if DepthMap::is_valid_value(z) { 1.0 / z } else { f64::NAN })
        .collect();
    let hi = inv.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    write_gray_png(path, depth.width(), depth.height(), &inv, 0.0, hi)
}

fn cmd_synth(a: &SynthArgs) -> Result<String> {
    let scene = PlanarScene::from_file(&a.scene)?;
    ensure_dir(&a.out)?;
    let rendered = scene.render_depth()?;
    let (w, h) = (rendered.depth.width(), rendered.depth.height());
    write_pfm(&a.out.join("depth.pfm"), &rendered.depth)?;
    write_depth_png(&a.out.join("depth.png"), &rendered.depth)?;
    write_label_png(&a.out.join("labels.png"), w, h, &rendered.class_ids)?;
    inverse_depth_preview(&a.out.join("preview.png"), &rendered.depth)?;
    data_io::write_gravity(&a.out.join("gravity.txt"), &scene.gravity)?;
    data_io::write_calibration(
        &a.out.join("calib.txt"),
        &data_io::Calibration {
            intrinsics: scene.intrinsics,
            r_cb: None,
        },
    )?;
    let mut extras = Vec::new();
    if let Some(b) = scene.baseline {
        let pair = scene.render_stereo_pair(b)?;
        write_image_png(&a.out.join("left.png"), &pair.left)?;
        write_image_png(&a.out.join("right.png"), &pair.right)?;
        write_pfm(&a.out.join("disparity.pfm"), &pair.disparity)?;
        extras.push(format!("baseline={b}"));
    } else {
        write_image_png(
            &a.out.join("left.png"),
            &scene.render_view(&crate::warp::Pose::identity())?,
        )?;
    }
    if !scene.frames.is_empty() {
        for (i, img) in scene.render_sequence()?.iter().enumerate() {
            write_image_png(&a.out.join(format!("frame_{i:03}.png")), img)?;
        }
        let poses: Vec<_> = std::iter::once(None)
            .chain(scene.frames.iter().copied().map(Some))
            .collect();
        write_file(&a.out.join("poses.txt"), &data_io::poses_to_text(&poses))?;
        extras.push(format!("frames={}", scene.frames.len() + 1));
    }
    if let Some(sigma) = a.noise {
        let noisy = add_depth_noise(&rendered.depth, DepthNoise::Gaussian { sigma }, a.seed)?;
        write_pfm(&a.out.join("depth_noisy.pfm"), &noisy)?;
        extras.push(format!("noise={sigma}"));
    }
    if let Some(fraction) = a.dropout {
        let sparse = add_depth_noise(&rendered.depth, DepthNoise::Dropout { fraction }, a.seed)?;
        write_depth_png(&a.out.join("depth_sparse.png"), &sparse)?;
        extras.push(format!("dropout={fraction}"));
    }
    let mut line = format!(
        "synth ok width={w} height={h} planes={} valid={}",
        scene.planes.len(),
        rendered.depth.valid_count()
    );
    for e in extras {
        line.push(' ');
        line.push_str(&e);
    }
    Ok(line)
}

fn base_config(path: Option<&Path>) -> Result<RefinementConfig> {
    path.map_or_else(|| Ok(RefinementConfig::default()), RefinementConfig::from_file)
}

fn apply_sigl_args(cfg: &mut RefinementConfig, a: &SiglArgs) -> Result<CategoryMapping> {
    if let Some(c) = &a.categories {
        cfg.categories = c.parse::<CategorySet>()?;
    }
    if let Some(d) = &a.directions {
        cfg.vertical = parse_vertical(d).map_err(Error::Config)?;
    }
    if let Some(w) = a.hp_weight {
        cfg.hp_weight = w;
    }
    if let Some(w) = a.vp_weight {
        cfg.vp_weight = w;
    }
    cfg.validate()?;
    a.mapping
        .as_deref()
        .map_or_else(|| Ok(CategoryMapping::cityscapes()), read_category_mapping)
}

fn cmd_loss(a: &LossArgs, config: Option<&Path>) -> Result<String> {
    let mut cfg = base_config(config)?;
    let mapping = apply_sigl_args(&mut cfg, &a.sigl)?;
    let depth = read_depth_any(&a.depth)?;
    let calib = read_calibration(&a.calib)?;
    let mask = read_label_png(&a.labels, &mapping)?;
    let gravity = match &a.gravity {
        Some(p) => read_gravity(p)?,
        None => return Err(Error::Config("the geometric losses need --gravity".into())),
    };
    let report = sigl_total(&depth, &calib.intrinsics, &gravity, &mask, &cfg.sigl())?;
    if let Some(csv) = &a.csv {
        let mut s = String::from("region,category,orientation,pixels,loss,weighted\n");
        for (i, r) in report.regions.iter().enumerate() {
            s.push_str(&format!(
                "{i},{},{},{},{},{}\n",
                r.category,
                r.orientation.name(),
                r.pixel_count,
                r.loss,
                r.weighted
            ));
        }
        for c in &report.per_category {
            s.push_str(&format!("total,{},all,,{},\n", c.category, c.hp + c.vp));
        }
        write_file(csv, &s)?;
    }
    Ok(format!(
        "loss ok total={:?} hp={:?} vp={:?} regions={} skipped_regions={} categories={}",
        report.total,
        report.hp_total,
        report.vp_total,
        report.regions.len(),
        report.skipped_regions,
        cfg.categories
    ))
}

fn apply_weights(cfg: &mut RefinementConfig, overrides: &str) -> Result<()> {
    for part in overrides.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("weight '{part}' is not key=value")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("weight '{part}' is not a number")))?;
        match k.trim() {
            "photometric" => cfg.photometric_weight = v,
            "smoothness" => cfg.smoothness_weight = v,
            "hp" => cfg.hp_weight = v,
            "vp" => cfg.vp_weight = v,
            "sigl" => {
                cfg.hp_weight = v;
                cfg.vp_weight = v;
            }
            other => return Err(Error::Config(format!("unknown weight '{other}'"))),
        }
    }
    cfg.validate()
}

fn abs_rel(depth: &DepthMap, gt: &DepthMap) -> Result<f64> {
    Ok(evaluate(depth, gt, &EvalOptions::with_cap(1e6))?.abs_rel)
}

fn cmd_refine(a: &RefineArgs, config: Option<&Path>) -> Result<String> {
    let mut cfg = base_config(config)?;
    let mapping = apply_sigl_args(&mut cfg, &a.sigl)?;
    if let Some(w) = &a.weights {
        apply_weights(&mut cfg, w)?;
    }
    if let Some(n) = a.iterations {
        cfg.max_iterations = n;
    }
    let calib = read_calibration(&a.calib)?;
    let init_depth = read_depth_any(&a.init)?;
    let init: InverseDepthMap = init_depth.to_inverse();

    let gravity = a.gravity.as_deref().map(read_gravity).transpose()?;
    let mask = if cfg.uses_sigl() {
        a.labels.as_deref().map(|p| read_label_png(p, &mapping)).transpose()?
    } else {
        None
    };

    let left;
    let right;
    let sequence;
    let supervision = match (&a.left, &a.right, a.frames.is_empty()) {
        (Some(l), Some(r), true) => {
            let baseline = a
                .baseline
                .ok_or_else(|| Error::Config("stereo supervision needs --baseline".into()))?;
            left = read_image_png(l)?;
            right = read_image_png(r)?;
            Supervision::Stereo {
                left: &left,
                right: &right,
                baseline,
            }
        }
        (None, None, false) => {
            let poses_path = a
                .poses
                .as_deref()
                .ok_or_else(|| Error::Config("monocular supervision needs --poses".into()))?;
            let frames = a.frames.iter().map(|p| read_image_png(p)).collect::<Result<Vec<_>>>()?;
            let poses = data_io::read_poses(poses_path)?;
            let neighbors = (0..frames.len()).filter(|&i| i != a.reference).collect();
            sequence = FrameSequence {
                frames,
                poses,
                window: TemporalWindow::new(a.reference, neighbors)?,
            };
            sequence.validate()?;
            Supervision::Monocular(&sequence)
        }
        (None, None, true) => Supervision::None,
        _ => {
            return Err(Error::Config(
                "give either --left and --right, or --frames, not a mix".into(),
            ))
        }
    };
    let inputs = RefineInputs {
        supervision,
        intrinsics: &calib.intrinsics,
        gravity: gravity.as_ref(),
        mask: mask.as_ref(),
    };
    let (refined, trace) = refine(&init, &inputs, &cfg)?;
    ensure_dir(&a.out)?;
    let depth = refined.to_depth();
    write_pfm(&a.out.join("inverse_depth.pfm"), &refined)?;
    write_pfm(&a.out.join("depth.pfm"), &depth)?;
    inverse_depth_preview(&a.out.join("preview.png"), &depth)?;
    write_file(&a.out.join("trace.csv"), &trace.to_csv())?;
    write_file(&a.out.join("config.txt"), &cfg.to_text())?;

    let mut line = format!(
        "refine ok iterations={} termination={} initial={:?} final={:?}",
        trace.iterations.len(),
        trace.termination.name(),
        trace.initial.total(),
        trace.final_terms().total()
    );
    if let Some(gt_path) = &a.gt {
        let gt = read_depth_any(gt_path)?;
        line.push_str(&format!(
            " abs_rel_initial={:?} abs_rel_final={:?}",
            abs_rel(&init_depth, &gt)?,
            abs_rel(&depth, &gt)?
        ));
    }
    Ok(line)
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("GEOSUP_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| Error::Config(format!("GEOSUP_THREADS must be a positive integer, got '{v}'")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker threads: {e}")))
}

fn cmd_eval(a: &EvalArgs) -> Result<String> {
    let opts = EvalOptions {
        cap: a.cap,
        filter_gt_by_cap: !a.keep_far_gt,
        crop: a.crop.parse::<CropMode>()?,
    };
    let names = |dir: &Path| -> Result<BTreeMap<String, PathBuf>> {
        Ok(data_io::list_files(dir, "png")?
            .into_iter()
            .chain(data_io::list_files(dir, "pfm")?)
            .filter_map(|p| Some((p.file_stem()?.to_str()?.to_string(), p)))
            .collect())
    };
    let preds = names(&a.pred_dir)?;
    let gts = names(&a.gt_dir)?;
    let missing: Vec<String> = gts
        .keys()
        .filter(|k| !preds.contains_key(*k))
        .map(|k| format!("{k} (no prediction)"))
        .chain(
            preds
                .keys()
                .filter(|k| !gts.contains_key(*k))
                .map(|k| format!("{k} (no ground truth)")),
        )
        .collect();
    if !missing.is_empty() {
        return Err(Error::invalid(format!("unmatched files: {}", missing.join(", "))));
    }
    if gts.is_empty() {
        return Err(Error::EmptyEvaluation(format!(
            "no depth files in {}",
            a.gt_dir.display()
        )));
    }
    if let Some(dir) = &a.error_maps {
        ensure_dir(dir)?;
    }
    let jobs: Vec<(&String, &PathBuf, &PathBuf)> = gts.iter().map(|(k, g)| (k, &preds[k], g)).collect();
    let pool = thread_pool()?;
    let results: Vec<Result<(String, MetricReport)>> = pool.install(|| {
        jobs.par_iter()
            .map(|(name, p, g)| {
                let pred = read_depth_any(p)?;
                let gt = read_depth_any(g)?;
                let report = evaluate(&pred, &gt, &opts)?;
                if let Some(dir) = &a.error_maps {
                    let err = error_map(&pred, &gt, &opts)?;
                    write_gray_png(
                        &dir.join(format!("{name}.png")),
                        gt.width(),
                        gt.height(),
                        &err,
                        0.0,
                        0.5,
                    )?;
                }
                Ok(((*name).clone(), report))
            })
            .collect()
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    let reports: Vec<MetricReport> = rows.iter().map(|(_, r)| *r).collect();
    let mean = aggregate(&reports)?;
    if let Some(csv) = &a.csv {
        let mut s = String::from(MetricReport::CSV_HEADER);
        s.push('\n');
        for (name, r) in &rows {
            s.push_str(&r.csv_row(name));
            s.push('\n');
        }
        s.push_str(&mean.csv_row("mean"));
        s.push('\n');
        write_file(csv, &s)?;
    }
    Ok(format!(
        "eval ok images={} abs_rel={:?} sq_rel={:?} rmse={:?} rmse_log={:?} log10={:?} a1={:?} a2={:?} a3={:?} valid={} cap={:?}",
        rows.len(),
        mean.abs_rel,
        mean.sq_rel,
        mean.rmse,
        mean.rmse_log,
        mean.log10,
        mean.a1,
        mean.a2,
        mean.a3,
        mean.valid,
        mean.cap
    ))
}
