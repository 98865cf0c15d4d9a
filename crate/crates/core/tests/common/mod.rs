#![allow(dead_code)]

use geosup::camera::{CameraIntrinsics, Point3};
use geosup::gravity::{GravityVector, Rotation};
use geosup::grid::{DepthMap, Image, InverseDepthMap};
use geosup::refiner::{refine, RefineInputs, RefinementConfig, RefinementTrace, Supervision};
use geosup::semantics::{cityscapes_class_id, SemanticMask};
use geosup::sigl::{plane_variance, SiglConfig};
use geosup::synthetic::{add_depth_noise, DepthNoise, PlanarScene, Plane, StereoPair, Texture};
use nalgebra::Vector3;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-3 {
            return v / n;
        }
    }
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation {
    let axis = unit_vector(rng);
    Rotation::about_axis(&axis, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)).unwrap()
}

pub fn random_gravity(rng: &mut ChaCha8Rng) -> GravityVector {
    GravityVector::new(unit_vector(rng)).unwrap()
}

/// Anisotropic Gaussian cloud with a random offset.
pub fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3> {
    let scales = Vector3::new(
        rng.random_range(0.05..5.0),
        rng.random_range(0.05..5.0),
        rng.random_range(0.05..5.0),
    );
    let rot = random_rotation(rng);
    let offset = Vector3::new(
        rng.random_range(-10.0..10.0),
        rng.random_range(-10.0..10.0),
        rng.random_range(1.0..30.0),
    );
    (0..n)
        .map(|_| {
            let v = Vector3::new(
                rng.sample::<f64, _>(StandardNormal) * scales.x,
                rng.sample::<f64, _>(StandardNormal) * scales.y,
                rng.sample::<f64, _>(StandardNormal) * scales.z,
            );
            rot.apply(&v) + offset
        })
        .collect()
}

/// Max over entries of `|a - n| / max(|a|, |n|, 1e-6 * max|a|)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-6 * scale).max(f64::MIN_POSITIVE);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Central differences of `f` at `x` with per-coordinate step `step(x_i)`.
pub fn central_differences(x: &[f64], mut f: impl FnMut(&[f64]) -> f64, step: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = step(x[i]);
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Random planar scene: a road plane orthogonal to a tilted gravity direction plus a
/// building facade and a vehicle side, both parallel to gravity.
pub fn random_plane_scene(rng: &mut ChaCha8Rng) -> PlanarScene {
    let (w, h) = (48, 32);
    let f = rng.random_range(30.0..70.0);
    let intr = CameraIntrinsics::new(
        f,
        f * rng.random_range(0.9..1.1),
        w as f64 / 2.0 + rng.random_range(-3.0..3.0),
        h as f64 / 2.0 + rng.random_range(-3.0..3.0),
        w,
        h,
    )
    .unwrap();
    let tilt = Rotation::from_rpy(rng.random_range(-0.25..0.25), rng.random_range(-0.25..0.25), 0.0);
    let gravity = GravityVector::new(tilt.apply(&Vector3::y())).unwrap();
    let g = *gravity.vector();
    let vertical_normal = |theta: f64| {
        let v = tilt.apply(&Vector3::new(theta.sin(), 0.0, theta.cos()));
        (v - g * v.dot(&g)).normalize()
    };
    let road = cityscapes_class_id("road").unwrap();
    let building = cityscapes_class_id("building").unwrap();
    let car = cityscapes_class_id("car").unwrap();
    let planes = vec![
        Plane::new(g, rng.random_range(1.0..3.0), road, Texture::noise(rng.random())).unwrap(),
        Plane::new(
            vertical_normal(rng.random_range(-1.0..0.0)),
            rng.random_range(5.0..30.0),
            building,
            Texture::noise(rng.random()),
        )
        .unwrap(),
        Plane::new(
            vertical_normal(rng.random_range(0.0..1.0)),
            rng.random_range(5.0..30.0),
            car,
            Texture::noise(rng.random()),
        )
        .unwrap(),
    ];
    PlanarScene {
        gravity,
        ..PlanarScene::new(intr, planes)
    }
}

/// Ground plus facade scene used by the refinement checks.
pub struct TwoPlaneSetup {
    pub scene: PlanarScene,
    pub pair: StereoPair,
    pub mask: SemanticMask,
    pub truth: DepthMap,
    pub noisy: DepthMap,
    pub baseline: f64,
}

pub fn two_plane_setup() -> TwoPlaneSetup {
    let intr = CameraIntrinsics::new(200.0, 200.0, 128.0, 64.0, 256, 128).unwrap();
    let scene = PlanarScene::ground_and_wall(intr, 1.5, 20.0).unwrap();
    let baseline = 0.5;
    let rendered = scene.render_depth().unwrap();
    let pair = scene.render_stereo_pair(baseline).unwrap();
    let noisy = add_depth_noise(&rendered.depth, DepthNoise::Gaussian { sigma: 0.05 }, 2024).unwrap();
    TwoPlaneSetup {
        scene,
        pair,
        mask: rendered.mask,
        truth: rendered.depth,
        noisy,
        baseline,
    }
}

impl TwoPlaneSetup {
    pub fn refinement_config(&self) -> RefinementConfig {
        RefinementConfig {
            max_iterations: 300,
            ..RefinementConfig::default()
        }
    }

    pub fn run(&self, cfg: &RefinementConfig) -> (InverseDepthMap, RefinementTrace) {
        let inputs = RefineInputs {
            supervision: Supervision::Stereo {
                left: &self.pair.left,
                right: &self.pair.right,
                baseline: self.baseline,
            },
            intrinsics: &self.scene.intrinsics,
            gravity: Some(&self.scene.gravity),
            mask: Some(&self.mask),
        };
        refine(&self.noisy.to_inverse(), &inputs, cfg).unwrap()
    }

    pub fn variance(&self, depth: &DepthMap) -> f64 {
        plane_variance(
            depth,
            &self.scene.intrinsics,
            &self.scene.gravity,
            &self.mask,
            &SiglConfig::default(),
        )
        .unwrap()
    }
}

pub fn textured(w: usize, h: usize, seed: u64) -> Image {
    let t = Texture::Noise {
        seed,
        cell: 2.5,
        octaves: 2,
    };
    Image::gray_from_fn(w, h, |x, y| t.value(x as f64, y as f64)).unwrap()
}
