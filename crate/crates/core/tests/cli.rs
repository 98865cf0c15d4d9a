use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use geosup::data_io::{read_pfm, write_pfm};
use geosup::grid::DepthMap;
use tempfile::TempDir;

const SCENE: &str = "\
camera 200 200 64 32 128 64
gravity 0 1 0
baseline 0.5
plane 0 1 0 1.5 road 11
plane 0 0 1 20 building 23
frame 0.2 0 0.5
";

/// Wall beyond 50 m so that the evaluation cap matters.
const FAR_SCENE: &str = "\
camera 100 100 32 16 64 32
gravity 0 1 0
plane 0 1 0 1.5 road 5
plane 0 0 1 70 building 6
";

fn geosup(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geosup"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn field(line: &str, key: &str) -> f64 {
    line.split_whitespace()
        .find_map(|t| t.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in '{line}'"))
        .parse()
        .unwrap()
}

struct Synth {
    _dir: TempDir,
    out: PathBuf,
}

fn synth(scene: &str, extra: &[&str]) -> Synth {
    let dir = TempDir::new().unwrap();
    let scene_path = dir.path().join("scene.txt");
    std::fs::write(&scene_path, scene).unwrap();
    let out = dir.path().join("out");
    let mut args = vec!["synth", s(&scene_path), "--out", s(&out)];
    args.extend_from_slice(extra);
    let o = geosup(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    Synth { _dir: dir, out }
}

#[test]
fn synth_writes_all_outputs() {
    let run = synth(SCENE, &["--noise", "0.05", "--dropout", "0.3", "--seed", "4"]);
    for name in [
        "depth.pfm",
        "depth.png",
        "labels.png",
        "preview.png",
        "gravity.txt",
        "calib.txt",
        "left.png",
        "right.png",
        "disparity.pfm",
        "frame_000.png",
        "frame_001.png",
        "poses.txt",
        "depth_noisy.pfm",
        "depth_sparse.png",
    ] {
        assert!(run.out.join(name).exists(), "missing {name}");
    }
}

#[test]
fn shipped_scene_renders() {
    let scene = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/ground_wall.scene");
    let dir = TempDir::new().unwrap();
    let o = geosup(&["synth", s(&scene), "--out", s(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(field(&stdout(&o), "valid"), 256.0 * 128.0);
}

#[test]
fn synth_noise_is_seed_deterministic() {
    let read = |seed: &str| {
        let run = synth(SCENE, &["--noise", "0.05", "--seed", seed]);
        std::fs::read(run.out.join("depth_noisy.pfm")).unwrap()
    };
    assert_eq!(read("9"), read("9"));
    assert_ne!(read("9"), read("10"));
}

#[test]
fn malformed_scene_reports_line() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.scene");
    std::fs::write(
        &path,
        "camera 200 200 64 32 128 64\ngravity 0 1 0\nplane 0 1 zero 1.5 road 1\n",
    )
    .unwrap();
    let o = geosup(&["synth", s(&path), "--out", s(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(":3:"), "{}", stderr(&o));
}

#[test]
fn loss_is_zero_at_truth_and_needs_gravity() {
    let run = synth(SCENE, &["--noise", "0.05"]);
    let p = |n: &str| run.out.join(n);
    let common = |depth: &Path| {
        vec![
            "loss".to_string(),
            "--depth".into(),
            s(depth).into(),
            "--labels".into(),
            s(&p("labels.png")).into(),
            "--calib".into(),
            s(&p("calib.txt")).into(),
        ]
    };
    let mut args = common(&p("depth.pfm"));
    args.extend(["--gravity".into(), s(&p("gravity.txt")).into()]);
    args.extend(["--csv".into(), s(&p("regions.csv")).into()]);
    let o = geosup(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(o.status.success(), "{}", stderr(&o));
    let truth = field(&stdout(&o), "total");
    assert!(truth < 1e-6, "{truth}");
    let csv = std::fs::read_to_string(p("regions.csv")).unwrap();
    assert!(csv.starts_with("region,category,orientation"));
    assert!(csv.lines().count() > 2);

    let mut args = common(&p("depth_noisy.pfm"));
    args.extend(["--gravity".into(), s(&p("gravity.txt")).into()]);
    let o = geosup(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(field(&stdout(&o), "total") > 1e3 * truth.max(1e-9));

    let o = geosup(&common(&p("depth.pfm")).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gravity"));
}

fn refine_args(run: &Synth, out: &Path, extra: &[&str]) -> Vec<String> {
    let p = |n: &str| s(&run.out.join(n)).to_string();
    let mut v: Vec<String> = [
        "refine",
        "--init",
        &p("depth_noisy.pfm"),
        "--calib",
        &p("calib.txt"),
        "--left",
        &p("left.png"),
        "--right",
        &p("right.png"),
        "--baseline",
        "0.5",
        "--out",
        s(out),
    ]
    .iter()
    .map(|a| a.to_string())
    .collect();
    v.extend(extra.iter().map(|a| a.to_string()));
    v
}

fn run_refine(args: &[String]) -> Output {
    geosup(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

#[test]
fn refine_zero_iterations_returns_input() {
    let run = synth(SCENE, &["--noise", "0.05"]);
    let out = run.out.join("r0");
    let o = run_refine(&refine_args(&run, &out, &["--iterations", "0", "--weights", "sigl=0"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, _, init) = read_pfm(&run.out.join("depth_noisy.pfm")).unwrap();
    let (_, _, refined) = read_pfm(&out.join("depth.pfm")).unwrap();
    for (a, b) in init.iter().zip(&refined) {
        assert!((a - b).abs() <= 1e-6 * a.abs(), "{a} vs {b}");
    }
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 2);
}

#[test]
fn refine_with_geometry_improves_and_disabled_geometry_ignores_inputs() {
    let run = synth(SCENE, &["--noise", "0.05", "--seed", "3"]);
    let p = |n: &str| s(&run.out.join(n)).to_string();
    let (gravity, labels, truth) = (p("gravity.txt"), p("labels.png"), p("depth.pfm"));
    let geometry = ["--gravity", gravity.as_str(), "--labels", labels.as_str()];

    let mut extra = geometry.to_vec();
    extra.extend(["--iterations", "60", "--gt", truth.as_str()]);
    let out = run.out.join("with");
    let o = run_refine(&refine_args(&run, &out, &extra));
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    assert!(
        field(&line, "abs_rel_final") < field(&line, "abs_rel_initial"),
        "{line}"
    );
    assert!(field(&line, "final") < field(&line, "initial"), "{line}");
    for name in [
        "inverse_depth.pfm",
        "depth.pfm",
        "preview.png",
        "trace.csv",
        "config.txt",
    ] {
        assert!(out.join(name).exists(), "missing {name}");
    }

    let a = run.out.join("a");
    let b = run.out.join("b");
    let mut extra = geometry.to_vec();
    extra.extend(["--iterations", "20", "--weights", "sigl=0"]);
    assert!(run_refine(&refine_args(&run, &a, &extra)).status.success());
    assert!(run_refine(&refine_args(
        &run,
        &b,
        &["--iterations", "20", "--weights", "hp=0,vp=0"]
    ))
    .status
    .success());
    assert_eq!(
        std::fs::read(a.join("inverse_depth.pfm")).unwrap(),
        std::fs::read(b.join("inverse_depth.pfm")).unwrap()
    );
}

#[test]
fn refine_rejects_missing_geometry_and_bad_weights() {
    let run = synth(SCENE, &["--noise", "0.05"]);
    let out = run.out.join("r");
    let o = run_refine(&refine_args(&run, &out, &["--iterations", "1"]));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = run_refine(&refine_args(&run, &out, &["--weights", "curvature=1"]));
    assert_eq!(o.status.code(), Some(2));
    let o = run_refine(&refine_args(&run, &out, &["--weights", "sigl=0", "--baseline", "-1"]));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn refine_reads_config_file() {
    let run = synth(SCENE, &["--noise", "0.05"]);
    let cfg = run.out.join("refine.cfg");
    std::fs::write(&cfg, "hp_weight = 0\nvp_weight = 0\nmax_iterations = 3\n").unwrap();
    let out = run.out.join("r");
    let mut args = vec!["--config".to_string(), s(&cfg).to_string()];
    args.extend(refine_args(&run, &out, &[]));
    let o = run_refine(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(field(&stdout(&o), "iterations") <= 3.0);

    std::fs::write(&cfg, "hp_weigth = 0\n").unwrap();
    let mut args = vec!["--config".to_string(), s(&cfg).to_string()];
    args.extend(refine_args(&run, &out, &[]));
    let o = run_refine(&args);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("hp_weigth"));
}

fn eval_dirs(run: &Synth) -> (PathBuf, PathBuf) {
    let gt = run.out.join("gt");
    let pred = run.out.join("pred");
    std::fs::create_dir_all(&gt).unwrap();
    std::fs::create_dir_all(&pred).unwrap();
    for name in ["a", "b"] {
        std::fs::copy(run.out.join("depth.pfm"), gt.join(format!("{name}.pfm"))).unwrap();
        std::fs::copy(run.out.join("depth_noisy.pfm"), pred.join(format!("{name}.pfm"))).unwrap();
    }
    (gt, pred)
}

#[test]
fn eval_identical_directories_give_zero_error() {
    let run = synth(FAR_SCENE, &["--noise", "0.05"]);
    let (gt, _) = eval_dirs(&run);
    let csv = run.out.join("metrics.csv");
    let maps = run.out.join("maps");
    let o = geosup(&[
        "eval",
        "--pred-dir",
        s(&gt),
        "--gt-dir",
        s(&gt),
        "--csv",
        s(&csv),
        "--error-maps",
        s(&maps),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    assert_eq!(field(&line, "abs_rel"), 0.0);
    assert_eq!(field(&line, "a1"), 1.0);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().last().unwrap().starts_with("mean,"));
    assert!(maps.join("a.png").exists());
}

#[test]
fn eval_cap_and_crop_change_the_pixel_set() {
    let run = synth(FAR_SCENE, &["--noise", "0.05"]);
    let (gt, pred) = eval_dirs(&run);
    let valid = |extra: &[&str]| {
        let mut args = vec!["eval", "--pred-dir", s(&pred), "--gt-dir", s(&gt)];
        args.extend_from_slice(extra);
        let o = geosup(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        field(&stdout(&o), "valid")
    };
    let at80 = valid(&["--cap", "80"]);
    let at50 = valid(&["--cap", "50"]);
    assert!(at50 < at80, "{at50} vs {at80}");
    assert_eq!(valid(&["--cap", "50", "--keep-far-gt"]), at80);
    assert!(valid(&["--crop", "garg"]) < at80);
    let o = geosup(&["eval", "--pred-dir", s(&pred), "--gt-dir", s(&gt), "--crop", "diagonal"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_thread_count_does_not_change_results() {
    let run = synth(FAR_SCENE, &["--noise", "0.05"]);
    let (gt, pred) = eval_dirs(&run);
    let line = |threads: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_geosup"))
            .args(["eval", "--pred-dir", s(&pred), "--gt-dir", s(&gt)])
            .env("GEOSUP_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o)
    };
    assert_eq!(line("1"), line("4"));
    let o = Command::new(env!("CARGO_BIN_EXE_geosup"))
        .args(["eval", "--pred-dir", s(&pred), "--gt-dir", s(&gt)])
        .env("GEOSUP_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_unmatched_files_fail() {
    let run = synth(FAR_SCENE, &["--noise", "0.05"]);
    let (gt, pred) = eval_dirs(&run);
    std::fs::copy(run.out.join("depth.pfm"), gt.join("c.pfm")).unwrap();
    let o = geosup(&["eval", "--pred-dir", s(&pred), "--gt-dir", s(&gt)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("c (no prediction)"), "{}", stderr(&o));
}

#[test]
fn eval_nan_prediction_is_a_numerical_error() {
    let run = synth(FAR_SCENE, &["--noise", "0.05"]);
    let (gt, pred) = eval_dirs(&run);
    let (w, h, mut v) = read_pfm(&gt.join("a.pfm")).unwrap();
    v[w * h / 2] = f64::NAN;
    write_pfm(&pred.join("a.pfm"), &DepthMap::from_vec(w, h, v).unwrap()).unwrap();
    let o = geosup(&["eval", "--pred-dir", s(&pred), "--gt-dir", s(&gt)]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn missing_input_file_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let o = geosup(&["synth", s(&dir.path().join("none.scene")), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}
