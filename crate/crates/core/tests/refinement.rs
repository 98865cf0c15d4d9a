mod common;

use common::*;
use geosup::error::Error;
use geosup::gravity::Rotation;
use geosup::grid::{DepthMap, InverseDepthMap};
use geosup::metrics::{evaluate, EvalOptions};
use geosup::refiner::{refine, RefineInputs, RefinementConfig, RefinementTrace, Supervision, Termination};
use geosup::warp::{FrameSequence, Pose, TemporalWindow};
use nalgebra::Vector3;

fn abs_rel(depth: &DepthMap, truth: &DepthMap) -> f64 {
    evaluate(depth, truth, &EvalOptions::with_cap(1e6)).unwrap().abs_rel
}

fn geometry_only(setup: &TwoPlaneSetup) -> RefineInputs<'_> {
    RefineInputs {
        supervision: Supervision::None,
        intrinsics: &setup.scene.intrinsics,
        gravity: Some(&setup.scene.gravity),
        mask: Some(&setup.mask),
    }
}

fn geometry_config() -> RefinementConfig {
    RefinementConfig {
        photometric_weight: 0.0,
        smoothness_weight: 0.0,
        max_iterations: 100,
        ..RefinementConfig::default()
    }
}

#[test]
fn geometric_terms_alone_flatten_the_planes() {
    let setup = two_plane_setup();
    let (out, trace) = refine(&setup.noisy.to_inverse(), &geometry_only(&setup), &geometry_config()).unwrap();
    let before = setup.variance(&setup.noisy);
    let after = setup.variance(&out.to_depth());
    assert!(after * 10.0 < before, "{before} -> {after}");
    assert!(trace.final_terms().photometric == 0.0 && trace.final_terms().smoothness == 0.0);
}

#[test]
fn monocular_supervision_reduces_depth_error() {
    let setup = two_plane_setup();
    let mut scene = setup.scene.clone();
    let poses = [
        Pose::new(Rotation::from_rpy(0.0, 0.005, 0.0), Vector3::new(0.4, 0.0, 0.0)),
        Pose::new(Rotation::from_rpy(0.0, -0.005, 0.0), Vector3::new(-0.4, 0.0, 0.0)),
    ];
    scene.frames = poses.to_vec();
    let seq = FrameSequence {
        frames: scene.render_sequence().unwrap(),
        poses: vec![None, Some(poses[0]), Some(poses[1])],
        window: TemporalWindow::new(0, vec![1, 2]).unwrap(),
    };
    let inputs = RefineInputs {
        supervision: Supervision::Monocular(&seq),
        intrinsics: &scene.intrinsics,
        gravity: Some(&scene.gravity),
        mask: Some(&setup.mask),
    };
    let cfg = RefinementConfig {
        max_iterations: 150,
        ..RefinementConfig::default()
    };
    let (out, trace) = refine(&setup.noisy.to_inverse(), &inputs, &cfg).unwrap();
    let before = abs_rel(&setup.noisy, &setup.truth);
    let after = abs_rel(&out.to_depth(), &setup.truth);
    assert!(after < 0.5 * before, "{before} -> {after}");
    assert!(trace.final_terms().photometric < trace.initial.photometric);
}

#[test]
fn all_zero_weights_return_the_input() {
    let setup = two_plane_setup();
    let init = setup.noisy.to_inverse();
    let cfg = RefinementConfig {
        photometric_weight: 0.0,
        smoothness_weight: 0.0,
        hp_weight: 0.0,
        vp_weight: 0.0,
        ..RefinementConfig::default()
    };
    let inputs = RefineInputs {
        supervision: Supervision::None,
        intrinsics: &setup.scene.intrinsics,
        gravity: None,
        mask: None,
    };
    let (out, trace) = refine(&init, &inputs, &cfg).unwrap();
    assert_eq!(out, init);
    assert_eq!(trace.termination, Termination::NoObjective);
    assert!(trace.iterations.is_empty());
}

#[test]
fn loose_tolerance_converges_early() {
    let setup = two_plane_setup();
    let cfg = RefinementConfig {
        tolerance: 0.05,
        ..geometry_config()
    };
    let (_, trace) = refine(&setup.noisy.to_inverse(), &geometry_only(&setup), &cfg).unwrap();
    assert_eq!(trace.termination, Termination::Converged);
    assert!(trace.iterations.len() < cfg.max_iterations);
}

#[test]
fn iteration_cap_is_respected_and_traced() {
    let setup = two_plane_setup();
    let cfg = RefinementConfig {
        max_iterations: 7,
        tolerance: 0.0,
        ..geometry_config()
    };
    let (_, trace) = refine(&setup.noisy.to_inverse(), &geometry_only(&setup), &cfg).unwrap();
    assert_eq!(trace.termination, Termination::MaxIterations);
    assert_eq!(trace.iterations.len(), 7);
    let csv = trace.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], RefinementTrace::CSV_HEADER);
    assert_eq!(lines.len(), 9);
    assert!(lines[1].starts_with("0,"));
}

#[test]
fn huge_learning_rate_backtracks_instead_of_diverging() {
    let setup = two_plane_setup();
    let cfg = RefinementConfig {
        learning_rate: 5.0,
        max_iterations: 20,
        ..geometry_config()
    };
    let (_, trace) = refine(&setup.noisy.to_inverse(), &geometry_only(&setup), &cfg).unwrap();
    assert!(trace.iterations.iter().any(|r| r.backtracks > 0) || trace.termination == Termination::LineSearchStalled);
    assert!(trace.final_terms().total() <= trace.initial.total());
}

#[test]
fn missing_inputs_are_configuration_errors() {
    let setup = two_plane_setup();
    let init = setup.noisy.to_inverse();
    let intr = &setup.scene.intrinsics;
    let cfg = geometry_config();
    let no_gravity = RefineInputs {
        gravity: None,
        ..geometry_only(&setup)
    };
    assert!(matches!(refine(&init, &no_gravity, &cfg), Err(Error::Config(_))));
    let no_mask = RefineInputs {
        mask: None,
        ..geometry_only(&setup)
    };
    assert!(matches!(refine(&init, &no_mask, &cfg), Err(Error::Config(_))));
    let no_images = RefineInputs {
        supervision: Supervision::None,
        intrinsics: intr,
        gravity: None,
        mask: None,
    };
    let photometric = RefinementConfig {
        hp_weight: 0.0,
        vp_weight: 0.0,
        ..RefinementConfig::default()
    };
    assert!(matches!(refine(&init, &no_images, &photometric), Err(Error::Config(_))));
}

#[test]
fn out_of_range_initialization_is_rejected() {
    let setup = two_plane_setup();
    let mut data = setup.noisy.to_inverse().into_vec();
    data[5] = 0.0;
    let init = InverseDepthMap::from_vec(setup.noisy.width(), setup.noisy.height(), data).unwrap();
    assert!(matches!(
        refine(&init, &geometry_only(&setup), &geometry_config()),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn shipped_config_matches_the_defaults() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/refine.cfg");
    assert_eq!(RefinementConfig::from_file(&path).unwrap(), RefinementConfig::default());
}
