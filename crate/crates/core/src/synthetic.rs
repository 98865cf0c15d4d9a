//! Planar scenes with analytic depth, semantics and textured imagery.
//!
//! A plane is stored as a unit normal `n` and distance `d > 0` so that its points satisfy
//! `n . X = d` in the reference camera frame, equivalently `X . N = 1` with `N = n / d`.
//! Textures live on the planes, so every rendered view of a scene is photometrically
//! consistent.

use std::path::Path;

use nalgebra::Vector3;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::gravity::{GravityVector, Rotation};
use crate::grid::{DepthMap, DisparityMap, Image};
use crate::semantics::{cityscapes_class_id, CategoryMapping, SemanticMask};
use crate::warp::Pose;

/// Label written for pixels that hit no plane.
pub const VOID_CLASS: u8 = 255;

/// Rays closer than this to parallel with a plane miss it.
const PARALLEL_EPS: f64 = 1e-12;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice(seed: u64, i: i64, j: i64) -> f64 {
    let h = splitmix(seed ^ splitmix(i as u64 ^ splitmix(j as u64)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Procedural surface texture: smoothed value noise or a constant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Texture {
    Constant(f64),
    Noise { seed: u64, cell: f64, octaves: u32 },
}

impl Texture {
    pub const DEFAULT_CELL: f64 = 0.25;

    pub fn noise(seed: u64) -> Self {
        Texture::Noise {
            seed,
            cell: Self::DEFAULT_CELL,
            octaves: 3,
        }
    }

    /// Intensity in `[0, 1]` at surface coordinates in meters.
    pub fn value(&self, u: f64, v: f64) -> f64 {
        match *self {
            Texture::Constant(c) => c,
            Texture::Noise { seed, cell, octaves } => {
                let mut total = 0.0;
                let mut norm = 0.0;
                let mut amp = 1.0;
                let mut scale = 1.0 / cell;
                for o in 0..octaves.max(1) {
                    let (x, y) = (u * scale, v * scale);
                    let (i, j) = (x.floor(), y.floor());
                    let (fx, fy) = (smoothstep(x - i), smoothstep(y - j));
                    let (i, j) = (i as i64, j as i64);
                    let s = seed.wrapping_add(o as u64 * 0x1000_0000_0001);
                    let top = lattice(s, i, j) * (1.0 - fx) + lattice(s, i + 1, j) * fx;
                    let bot = lattice(s, i, j + 1) * (1.0 - fx) + lattice(s, i + 1, j + 1) * fx;
                    total += amp * (top * (1.0 - fy) + bot * fy);
                    norm += amp;
                    amp *= 0.5;
                    scale *= 2.0;
                }
                total / norm
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    normal: Vector3<f64>,
    distance: f64,
    pub class_id: u8,
    pub texture: Texture,
    tangent: (Vector3<f64>, Vector3<f64>),
}

impl Plane {
    /// `normal` is normalized; `distance` is the distance from the reference camera center.
    pub fn new(normal: Vector3<f64>, distance: f64, class_id: u8, texture: Texture) -> Result<Self> {
        let len = normal.norm();
        if !(len.is_finite() && len > 0.0) {
            return Err(Error::invalid("plane normal must be non-zero"));
        }
        if !(distance.is_finite() && distance > 0.0) {
            return Err(Error::invalid(format!(
                "plane distance must be positive (plane through the camera center), got {distance}"
            )));
        }
        let n = normal / len;
        let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let t1 = (helper - n * helper.dot(&n)).normalize();
        let t2 = n.cross(&t1);
        Ok(Self {
            normal: n,
            distance,
            class_id,
            texture,
            tangent: (t1, t2),
        })
    }

    pub fn normal(&self) -> &Vector3<f64> {
        &self.normal
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    /// `N = n / d`, so that `X . N = 1` on the plane.
    pub fn scaled_normal(&self) -> Vector3<f64> {
        self.normal / self.distance
    }

    fn shade(&self, p: &Vector3<f64>) -> f64 {
        self.texture.value(p.dot(&self.tangent.0), p.dot(&self.tangent.1))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanarScene {
    pub intrinsics: CameraIntrinsics,
    pub gravity: GravityVector,
    pub planes: Vec<Plane>,
    pub baseline: Option<f64>,
    /// Poses mapping reference-frame points into additional frames.
    pub frames: Vec<Pose>,
    pub mapping: CategoryMapping,
}

/// Depth and labels rendered from one viewpoint. Pixels that hit no plane carry depth 0
/// and [`VOID_CLASS`].
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedDepth {
    pub depth: DepthMap,
    pub class_ids: Vec<u8>,
    pub mask: SemanticMask,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StereoPair {
    pub left: Image,
    pub right: Image,
    pub disparity: DisparityMap,
    pub depth: DepthMap,
}

/// Level camera with y pointing down.
pub fn default_gravity() -> GravityVector {
    GravityVector::new(Vector3::new(0.0, 1.0, 0.0)).expect("non-zero")
}

struct Hit<'a> {
    depth: f64,
    plane: &'a Plane,
    point: Vector3<f64>,
}

impl PlanarScene {
    pub fn new(intrinsics: CameraIntrinsics, planes: Vec<Plane>) -> Self {
        Self {
            intrinsics,
            gravity: default_gravity(),
            planes,
            baseline: None,
            frames: Vec::new(),
            mapping: CategoryMapping::cityscapes(),
        }
    }

    /// Road plane `height` meters below the camera and a building wall facing it.
    pub fn ground_and_wall(intrinsics: CameraIntrinsics, height: f64, wall_distance: f64) -> Result<Self> {
        let road = cityscapes_class_id("road").expect("known class");
        let building = cityscapes_class_id("building").expect("known class");
        Ok(Self::new(
            intrinsics,
            vec![
                Plane::new(Vector3::new(0.0, 1.0, 0.0), height, road, Texture::noise(11))?,
                Plane::new(Vector3::new(0.0, 0.0, 1.0), wall_distance, building, Texture::noise(23))?,
            ],
        ))
    }

    /// Nearest plane hit by pixel `(x, y)` of the camera at `pose`.
    fn trace(&self, pose: &Pose, x: usize, y: usize) -> Option<Hit<'_>> {
        let ray = *self.intrinsics.ray(x as f64, y as f64).vector();
        let inv = pose.inverse();
        let mut best: Option<Hit> = None;
        for plane in &self.planes {
            let n_cam = pose.rotation.apply(&plane.normal);
            let d_cam = plane.distance + n_cam.dot(&pose.translation);
            let denom = ray.dot(&n_cam);
            if denom.abs() <= PARALLEL_EPS {
                continue;
            }
            let z = d_cam / denom;
            if !(z > 0.0 && z.is_finite()) {
                continue;
            }
            if best.as_ref().is_none_or(|b| z < b.depth) {
                best = Some(Hit {
                    depth: z,
                    plane,
                    point: inv.transform(&(ray * z)),
                });
            }
        }
        best
    }

    fn render_from(&self, pose: &Pose) -> Result<(RenderedDepth, Image)> {
        let (w, h) = (self.intrinsics.width(), self.intrinsics.height());
        let mut depth = vec![0.0; w * h];
        let mut ids = vec![VOID_CLASS; w * h];
        let mut shade = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                if let Some(hit) = self.trace(pose, x, y) {
                    let i = y * w + x;
                    depth[i] = hit.depth;
                    ids[i] = hit.plane.class_id;
                    shade[i] = hit.plane.shade(&hit.point);
                }
            }
        }
        let mask = SemanticMask::from_class_ids(w, h, ids.clone(), &self.mapping).map_err(|e| match e {
            Error::UnmappedClasses { ids } => Error::invalid(format!(
                "scene uses class ids {ids:?} missing from the category mapping"
            )),
            other => other,
        })?;
        Ok((
            RenderedDepth {
                depth: DepthMap::from_vec(w, h, depth)?,
                class_ids: ids,
                mask,
            },
            Image::from_vec(w, h, 1, shade)?,
        ))
    }

    /// Per-pixel `Z = 1 / (r . N)` of the nearest plane, with semantics.
    pub fn render_depth(&self) -> Result<RenderedDepth> {
        Ok(self.render_from(&Pose::identity())?.0)
    }

    /// Grayscale image seen from the camera at `pose` (reference points into that frame).
    pub fn render_view(&self, pose: &Pose) -> Result<Image> {
        Ok(self.render_from(pose)?.1)
    }

    /// Reference image and one image per entry of `frames`.
    pub fn render_sequence(&self) -> Result<Vec<Image>> {
        std::iter::once(Pose::identity())
            .chain(self.frames.iter().copied())
            .map(|p| self.render_view(&p))
            .collect()
    }

    /// Left view at the reference camera and right view with its center at
    /// `(-baseline, 0, 0)`, so that `I_R(x + D, y) = I_L(x, y)` with `D = fx * B / Z`.
    pub fn render_stereo_pair(&self, baseline: f64) -> Result<StereoPair> {
        if !(baseline.is_finite() && baseline > 0.0) {
            return Err(Error::invalid(format!("baseline must be positive, got {baseline}")));
        }
        let (ref_depth, left) = self.render_from(&Pose::identity())?;
        let right = self.render_view(&Self::right_camera(baseline))?;
        let fb = self.intrinsics.fx() * baseline;
        let disparity = DisparityMap::from_vec(
            left.width(),
            left.height(),
            ref_depth
                .depth
                .data()
                .iter()
                .map(|&z| if DepthMap::is_valid_value(z) { fb / z } else { f64::NAN })
                .collect(),
        )?;
        Ok(StereoPair {
            left,
            right,
            disparity,
            depth: ref_depth.depth,
        })
    }

    /// Pose mapping left-camera points into the right camera.
    pub fn right_camera(baseline: f64) -> Pose {
        Pose::new(Rotation::identity(), Vector3::new(baseline, 0.0, 0.0))
    }

    /// Parses the plain-text scene format:
    ///
    /// ```text
    /// camera fx fy cx cy width height
    /// gravity gx gy gz
    /// baseline meters
    /// plane nx ny nz distance class texture_seed [cell_meters]
    /// frame tx ty tz [roll pitch yaw]
    /// ```
    ///
    /// `class` is a class name or numeric id; `texture_seed` may be `const:<value>`.
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut camera = None;
        let mut gravity = default_gravity();
        let mut baseline = None;
        let mut planes = Vec::new();
        let mut frames = Vec::new();
        let mapping = CategoryMapping::cityscapes();
        for (lineno, raw) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let err = |msg: String| Error::parse(source_name, line_no, msg);
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut tok = line.split_whitespace();
            let key = tok.next().unwrap();
            let args: Vec<&str> = tok.collect();
            let nums = |n_min: usize, n_max: usize| -> Result<Vec<f64>> {
                if args.len() < n_min || args.len() > n_max {
                    return Err(err(format!(
                        "'{key}' expects {} values, got {}",
                        if n_min == n_max {
                            n_min.to_string()
                        } else {
                            format!("{n_min}-{n_max}")
                        },
                        args.len()
                    )));
                }
                args.iter()
                    .map(|a| a.parse::<f64>().map_err(|_| err(format!("'{a}' is not a number"))))
                    .collect()
            };
            match key {
                "camera" => {
                    let v = nums(6, 6)?;
                    let dim = |f: f64| -> Result<usize> {
                        if f >= 1.0 && f.fract() == 0.0 {
                            Ok(f as usize)
                        } else {
                            Err(err(format!("image size must be a positive integer, got {f}")))
                        }
                    };
                    camera = Some(
                        CameraIntrinsics::new(v[0], v[1], v[2], v[3], dim(v[4])?, dim(v[5])?)
                            .map_err(|e| err(e.to_string()))?,
                    );
                }
                "gravity" => {
                    let v = nums(3, 3)?;
                    gravity = GravityVector::new(Vector3::new(v[0], v[1], v[2])).map_err(|e| err(e.to_string()))?;
                }
                "baseline" => {
                    let v = nums(1, 1)?;
                    if !(v[0] > 0.0) {
                        return Err(err(format!("baseline must be positive, got {}", v[0])));
                    }
                    baseline = Some(v[0]);
                }
                "plane" => {
                    if !(6..=7).contains(&args.len()) {
                        return Err(err(format!(
                            "'plane' expects nx ny nz distance class seed [cell], got {} values",
                            args.len()
                        )));
                    }
                    let f = |s: &str| s.parse::<f64>().map_err(|_| err(format!("'{s}' is not a number")));
                    let n = Vector3::new(f(args[0])?, f(args[1])?, f(args[2])?);
                    let distance = f(args[3])?;
                    let class_id = match args[4].parse::<u8>() {
                        Ok(id) => id,
                        Err(_) => mapping
                            .class_id(args[4])
                            .ok_or_else(|| err(format!("unknown class '{}'", args[4])))?,
                    };
                    let texture = if let Some(c) = args[5].strip_prefix("const:") {
                        let c = f(c)?;
                        if !(0.0..=1.0).contains(&c) {
                            return Err(err(format!("constant texture {c} outside [0, 1]")));
                        }
                        Texture::Constant(c)
                    } else {
                        let seed = args[5]
                            .parse::<u64>()
                            .map_err(|_| err(format!("'{}' is not a texture seed", args[5])))?;
                        let cell = if args.len() == 7 {
                            f(args[6])?
                        } else {
                            Texture::DEFAULT_CELL
                        };
                        if !(cell > 0.0) {
                            return Err(err(format!("texture cell must be positive, got {cell}")));
                        }
                        Texture::Noise { seed, cell, octaves: 3 }
                    };
                    planes.push(Plane::new(n, distance, class_id, texture).map_err(|e| err(e.to_string()))?);
                }
                "frame" => {
                    let v = nums(3, 6)?;
                    if v.len() == 4 || v.len() == 5 {
                        return Err(err("'frame' takes 3 or 6 values".into()));
                    }
                    let rotation = if v.len() == 6 {
                        Rotation::from_rpy(v[3], v[4], v[5])
                    } else {
                        Rotation::identity()
                    };
                    frames.push(Pose::new(rotation, Vector3::new(v[0], v[1], v[2])));
                }
                other => return Err(err(format!("unknown directive '{other}'"))),
            }
        }
        let intrinsics = camera.ok_or_else(|| Error::parse(source_name, 0, "missing 'camera' line"))?;
        if planes.is_empty() {
            return Err(Error::parse(source_name, 0, "scene has no planes"));
        }
        Ok(Self {
            intrinsics,
            gravity,
            planes,
            baseline,
            frames,
            mapping,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DepthNoise {
    /// Multiplicative `Z (1 + sigma * n)`, `n ~ N(0, 1)`. Non-positive results become invalid.
    Gaussian { sigma: f64 },
    /// Each valid pixel is invalidated with this probability.
    Dropout { fraction: f64 },
}

/// Seeded corruption of a depth map; invalid input pixels stay invalid.
pub fn add_depth_noise(depth: &DepthMap, model: DepthNoise, seed: u64) -> Result<DepthMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = depth.clone();
    match model {
        DepthNoise::Gaussian { sigma } => {
            if !(sigma.is_finite() && sigma >= 0.0) {
                return Err(Error::invalid(format!("noise sigma must be >= 0, got {sigma}")));
            }
            for z in out.data_mut() {
                if DepthMap::is_valid_value(*z) {
                    let n: f64 = rng.sample(StandardNormal);
                    let v = *z * (1.0 + sigma * n);
                    *z = if v > 0.0 { v } else { 0.0 };
                }
            }
        }
        DepthNoise::Dropout { fraction } => {
            if !(0.0..=1.0).contains(&fraction) {
                return Err(Error::invalid(format!(
                    "dropout fraction must be in [0, 1], got {fraction}"
                )));
            }
            for z in out.data_mut() {
                if DepthMap::is_valid_value(*z) && rng.random::<f64>() < fraction {
                    *z = 0.0;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::Orientation;

    fn cam(w: usize, h: usize) -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, (w / 2) as f64, (h / 2) as f64, w, h).unwrap()
    }

    #[test]
    fn ground_plane_depth_below_horizon() {
        let k = cam(32, 24);
        let h = 1.5;
        let road = cityscapes_class_id("road").unwrap();
        let scene = PlanarScene::new(
            k,
            vec![Plane::new(Vector3::new(0.0, 1.0, 0.0), h, road, Texture::noise(1)).unwrap()],
        );
        let r = scene.render_depth().unwrap();
        for y in 0..24 {
            let z = r.depth.get(5, y);
            if (y as f64) > k.cy() {
                assert!((z - h * k.fy() / (y as f64 - k.cy())).abs() < 1e-12);
                assert_eq!(r.mask.orientation(y * 32 + 5), Orientation::Horizontal);
            } else {
                assert_eq!(z, 0.0);
                assert_eq!(r.class_ids[y * 32 + 5], VOID_CLASS);
            }
        }
    }

    #[test]
    fn wall_is_constant_and_on_plane() {
        let k = cam(20, 10);
        let scene = PlanarScene::ground_and_wall(k, 1.5, 12.0).unwrap();
        let r = scene.render_depth().unwrap();
        assert_eq!(r.depth.get(3, 0), 12.0);
        for (i, &z) in r.depth.data().iter().enumerate() {
            assert!(z > 0.0);
            let x = k.back_project((i % 20) as f64, (i / 20) as f64, z).unwrap();
            let on_some = scene
                .planes
                .iter()
                .any(|p| (x.dot(&p.scaled_normal()) - 1.0).abs() < 1e-10);
            assert!(on_some);
        }
    }

    #[test]
    fn unit_disparity_plane() {
        let k = cam(40, 8);
        let baseline = 0.5;
        let z = k.fx() * baseline;
        let scene = PlanarScene::new(k, vec![Plane::new(Vector3::z(), z, 2, Texture::noise(5)).unwrap()]);
        let pair = scene.render_stereo_pair(baseline).unwrap();
        assert!(pair.disparity.data().iter().all(|&d| (d - 1.0).abs() < 1e-12));
        // I_R(x + 1) == I_L(x)
        for y in 0..8 {
            for x in 0..39 {
                assert!((pair.right.get(x + 1, y, 0) - pair.left.get(x, y, 0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn texture_range_and_determinism() {
        let t = Texture::noise(9);
        let mut lo: f64 = 1.0;
        let mut hi: f64 = 0.0;
        for i in 0..2000 {
            let v = t.value(i as f64 * 0.037, (i % 17) as f64 * 0.11);
            assert!((0.0..=1.0).contains(&v));
            lo = lo.min(v);
            hi = hi.max(v);
            assert_eq!(v, Texture::noise(9).value(i as f64 * 0.037, (i % 17) as f64 * 0.11));
        }
        assert!(hi - lo > 0.3);
        assert_ne!(t.value(0.3, 0.4), Texture::noise(10).value(0.3, 0.4));
    }

    #[test]
    fn zero_sigma_is_identity() {
        let d = DepthMap::from_fn(8, 8, |x, y| 1.0 + (x * y) as f64).unwrap();
        assert_eq!(add_depth_noise(&d, DepthNoise::Gaussian { sigma: 0.0 }, 3).unwrap(), d);
        assert!(add_depth_noise(&d, DepthNoise::Gaussian { sigma: -1.0 }, 3).is_err());
        assert!(add_depth_noise(&d, DepthNoise::Dropout { fraction: 1.5 }, 3).is_err());
    }

    #[test]
    fn parse_scene_file() {
        let text = "\
# two planes
camera 100 100 16 12 32 24
gravity 0 2 0
baseline 0.3
plane 0 1 0 1.5 road 7
plane 0 0 1 10 building const:0.5
frame 0 0 -0.5
";
        let s = PlanarScene::parse(text, "scene.txt").unwrap();
        assert_eq!(s.planes.len(), 2);
        assert_eq!(s.baseline, Some(0.3));
        assert_eq!(s.gravity.vector(), &Vector3::new(0.0, 1.0, 0.0));
        assert_eq!(s.planes[1].texture, Texture::Constant(0.5));
        assert_eq!(s.frames.len(), 1);

        let bad = "camera 100 100 16 12 32 24\nplane 0 1 0 oops road 7\n";
        match PlanarScene::parse(bad, "bad.txt") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(PlanarScene::parse("plane 0 1 0 1 road 1\n", "x").is_err());
        assert!(PlanarScene::parse("camera 1 1 0 0 2 2\nplane 0 1 0 1 martian 1\n", "x").is_err());
        assert!(PlanarScene::parse("camera 1 1 0 0 2 2\nplane 0 0 0 1 road 1\n", "x").is_err());
    }
}
