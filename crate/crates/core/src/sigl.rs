//! Semantically informed geometric losses.
//!
//! Points back-projected from a region whose surfaces share a known orientation relative
//! to gravity are penalized by the variance of their projections onto the surface normal:
//!
//! * horizontal regions use the gravity direction `g` itself,
//!   `L_HP = 1/M * sum(((X_i - mu) . g)^2)`;
//! * vertical regions minimize the same variance over unit directions orthogonal to `g`.
//!   The minimum is the smaller eigenvalue of the 2x2 scatter restricted to the null
//!   space of `g` ([`loss_vp_exact`]); the trainable form evaluates `K` evenly spaced
//!   directions and keeps the smallest ([`loss_vp_sampled`]).
//!
//! Mean-centering makes both losses independent of the plane's offset, so only the
//! normal direction has to be known. Gradients are taken with respect to per-pixel depth
//! `Z_i`, with `X_i = r_i Z_i` for the pixel ray `r_i`.

use nalgebra::{Matrix3, Vector3};

use crate::camera::{CameraIntrinsics, PixelRay, Point3};
use crate::error::{Error, Result};
use crate::gravity::GravityVector;
use crate::grid::DepthMap;
use crate::semantics::{Category, CategorySet, Orientation, SemanticMask};

/// Points with their sample mean removed.
#[derive(Clone, Debug, PartialEq)]
pub struct CenteredPoints {
    rows: Vec<Point3>,
    mean: Point3,
}

impl CenteredPoints {
    pub fn rows(&self) -> &[Point3] {
        &self.rows
    }

    pub fn mean(&self) -> &Point3 {
        &self.mean
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `1/M * sum(c_i c_i^T)`.
    pub fn scatter(&self) -> Matrix3<f64> {
        let mut s = Matrix3::zeros();
        for c in &self.rows {
            s += c * c.transpose();
        }
        s / self.rows.len() as f64
    }

    /// `1/M * sum((c_i . dir)^2)`.
    pub fn projection_variance(&self, dir: &Vector3<f64>) -> f64 {
        let sum: f64 = self.rows.iter().map(|c| c.dot(dir).powi(2)).sum();
        sum / self.rows.len() as f64
    }
}

pub fn center_points(points: &[Point3]) -> Result<CenteredPoints> {
    if points.is_empty() {
        return Err(Error::invalid("cannot center an empty point set"));
    }
    let mean = points.iter().fold(Point3::zeros(), |acc, p| acc + p) / points.len() as f64;
    let rows = points.iter().map(|p| p - mean).collect();
    Ok(CenteredPoints { rows, mean })
}

/// Horizontal-plane loss: variance of the points along gravity (m^2).
/// A single point has zero variance.
pub fn loss_hp(points: &[Point3], gravity: &GravityVector) -> Result<f64> {
    Ok(center_points(points)?.projection_variance(gravity.vector()))
}

fn check_rays(depths: &[f64], rays: &[PixelRay]) -> Result<()> {
    if depths.len() != rays.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} depths for {} rays",
            depths.len(),
            rays.len()
        )));
    }
    if depths.is_empty() {
        return Err(Error::invalid("empty point set"));
    }
    Ok(())
}

/// `d/dZ_i` of `1/M * sum(((X_j - mu) . n)^2)` for a fixed unit `n`:
/// `2/M * ((X_i - mu) . n) * (r_i . n)`. The mean's dependence on `Z_i` drops out
/// because the centered projections sum to zero.
fn fixed_direction_grad(depths: &[f64], rays: &[PixelRay], n: &Vector3<f64>) -> Vec<f64> {
    let m = depths.len() as f64;
    let proj: Vec<f64> = rays.iter().map(|r| r.vector().dot(n)).collect();
    let heights: Vec<f64> = depths.iter().zip(&proj).map(|(z, p)| z * p).collect();
    let mean = heights.iter().sum::<f64>() / m;
    heights
        .iter()
        .zip(&proj)
        .map(|(h, p)| 2.0 / m * (h - mean) * p)
        .collect()
}

fn points_from_rays(depths: &[f64], rays: &[PixelRay]) -> Vec<Point3> {
    rays.iter().zip(depths).map(|(r, &z)| r.at_depth(z)).collect()
}

/// Gradient of [`loss_hp`] with respect to each depth.
pub fn loss_hp_grad(depths: &[f64], rays: &[PixelRay], gravity: &GravityVector) -> Result<Vec<f64>> {
    check_rays(depths, rays)?;
    Ok(fixed_direction_grad(depths, rays, gravity.vector()))
}

/// Orthonormal basis `(b1, b2)` of the plane orthogonal to gravity.
///
/// `b1` is the x axis with its gravity component removed (the y axis when gravity is
/// within 1e-6 of the x axis); `b2 = g x b1`. Fixing the basis fixes the phase of the
/// sampled directions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NullSpaceBasis {
    pub b1: Vector3<f64>,
    pub b2: Vector3<f64>,
}

impl NullSpaceBasis {
    pub fn new(gravity: &GravityVector) -> Self {
        let g = gravity.vector();
        let reject = |e: Vector3<f64>| e - g * e.dot(g);
        let mut t = reject(Vector3::x());
        if t.norm() < 1e-6 {
            t = reject(Vector3::y());
        }
        let b1 = t.normalize();
        let b2 = g.cross(&b1);
        Self { b1, b2 }
    }

    pub fn direction(&self, angle: f64) -> Vector3<f64> {
        self.b1 * angle.cos() + self.b2 * angle.sin()
    }
}

/// `K` unit directions orthogonal to gravity at angles `k * 360 / K` degrees from `b1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledDirections {
    directions: Vec<Vector3<f64>>,
}

/// Eight directions, one every 45 degrees.
pub const DEFAULT_DIRECTIONS: usize = 8;

impl SampledDirections {
    pub fn new(gravity: &GravityVector, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("direction count must be at least 1"));
        }
        let basis = NullSpaceBasis::new(gravity);
        let step = std::f64::consts::TAU / count as f64;
        let directions = (0..count).map(|k| basis.direction(k as f64 * step)).collect();
        Ok(Self { directions })
    }

    pub fn as_slice(&self) -> &[Vector3<f64>] {
        &self.directions
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }
}

/// Result of the exact vertical-plane minimization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerticalPlaneFit {
    /// Smallest projection variance over unit directions orthogonal to gravity (m^2).
    pub loss: f64,
    /// The minimizing unit direction (sign is arbitrary).
    pub normal: Vector3<f64>,
}

/// Result of the sampled vertical-plane minimization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampledPlaneFit {
    pub loss: f64,
    pub index: usize,
    pub direction: Vector3<f64>,
}

/// Smaller eigenpair of the symmetric 2x2 matrix `[[a, b], [b, c]]`.
fn min_eigen_2x2(a: f64, b: f64, c: f64) -> (f64, [f64; 2]) {
    let mid = 0.5 * (a + c);
    let rad = (0.5 * (a - c)).hypot(b);
    let lambda = mid - rad;
    if b == 0.0 {
        return if a <= c { (a, [1.0, 0.0]) } else { (c, [0.0, 1.0]) };
    }
    // Two algebraically equivalent eigenvectors; keep the better-conditioned one.
    let v1 = [b, lambda - a];
    let v2 = [lambda - c, b];
    let n1 = v1[0].hypot(v1[1]);
    let n2 = v2[0].hypot(v2[1]);
    let v = if n1 >= n2 {
        [v1[0] / n1, v1[1] / n1]
    } else {
        [v2[0] / n2, v2[1] / n2]
    };
    (lambda, v)
}

fn exact_from_centered(centered: &CenteredPoints, gravity: &GravityVector) -> VerticalPlaneFit {
    let s = centered.scatter();
    let NullSpaceBasis { b1, b2 } = NullSpaceBasis::new(gravity);
    let a = b1.dot(&(s * b1));
    let b = b1.dot(&(s * b2));
    let c = b2.dot(&(s * b2));
    let (lambda, v) = min_eigen_2x2(a, b, c);
    VerticalPlaneFit {
        loss: lambda.max(0.0),
        normal: (b1 * v[0] + b2 * v[1]).normalize(),
    }
}

/// Exact vertical-plane loss: the smaller eigenvalue of `E^T S E`, where `E = [b1 b2]`
/// spans the null space of gravity and `S` is the `1/M`-scaled scatter matrix.
pub fn loss_vp_exact(points: &[Point3], gravity: &GravityVector) -> Result<VerticalPlaneFit> {
    let centered = center_points(points)?;
    Ok(exact_from_centered(&centered, gravity))
}

fn sampled_from_centered(centered: &CenteredPoints, directions: &SampledDirections) -> SampledPlaneFit {
    let s = centered.scatter();
    let dirs = directions.as_slice();
    let mut best = SampledPlaneFit {
        loss: dirs[0].dot(&(s * dirs[0])).max(0.0),
        index: 0,
        direction: dirs[0],
    };
    for (k, d) in dirs.iter().enumerate().skip(1) {
        let v = d.dot(&(s * d)).max(0.0);
        // Values equal up to rounding count as ties; the lower index is kept.
        if v < best.loss - 1e-12 * best.loss {
            best = SampledPlaneFit {
                loss: v,
                index: k,
                direction: *d,
            };
        }
    }
    best
}

/// Sampled vertical-plane loss: the minimum projection variance over `count` evenly
/// spaced directions orthogonal to gravity. Always at least [`loss_vp_exact`].
pub fn loss_vp_sampled(points: &[Point3], gravity: &GravityVector, count: usize) -> Result<SampledPlaneFit> {
    let directions = SampledDirections::new(gravity, count)?;
    let centered = center_points(points)?;
    Ok(sampled_from_centered(&centered, &directions))
}

/// Gradient of [`loss_vp_sampled`] with the minimizing direction held fixed.
pub fn loss_vp_grad(depths: &[f64], rays: &[PixelRay], gravity: &GravityVector, count: usize) -> Result<Vec<f64>> {
    check_rays(depths, rays)?;
    let fit = loss_vp_sampled(&points_from_rays(depths, rays), gravity, count)?;
    Ok(fixed_direction_grad(depths, rays, &fit.direction))
}

/// Gradient of [`loss_vp_exact`]. Holding the eigenvector fixed gives the exact
/// derivative of a simple eigenvalue.
pub fn loss_vp_exact_grad(depths: &[f64], rays: &[PixelRay], gravity: &GravityVector) -> Result<Vec<f64>> {
    check_rays(depths, rays)?;
    let fit = loss_vp_exact(&points_from_rays(depths, rays), gravity)?;
    Ok(fixed_direction_grad(depths, rays, &fit.normal))
}

/// How image regions are formed before the losses are applied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RegionMode {
    /// One region per 4-connected component of a category.
    #[default]
    Components,
    /// One region per category over the whole image.
    PerCategory,
}

/// Solver for vertical regions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerticalSolver {
    Sampled(usize),
    Exact,
}

impl Default for VerticalSolver {
    fn default() -> Self {
        VerticalSolver::Sampled(DEFAULT_DIRECTIONS)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SiglConfig {
    pub hp_weight: f64,
    pub vp_weight: f64,
    pub categories: CategorySet,
    pub vertical: VerticalSolver,
    pub region_mode: RegionMode,
    /// Regions with fewer pixels are skipped.
    pub min_region_pixels: usize,
}

impl Default for SiglConfig {
    fn default() -> Self {
        Self {
            hp_weight: 1.0,
            vp_weight: 1.0,
            categories: CategorySet::default(),
            vertical: VerticalSolver::default(),
            region_mode: RegionMode::default(),
            min_region_pixels: 16,
        }
    }
}

/// Pixels sharing one category and orientation.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub category: Category,
    pub orientation: Orientation,
    /// Row-major pixel indices, ascending.
    pub pixels: Vec<usize>,
}

/// Regions of gated, oriented pixels with valid depth, ordered by their first pixel.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RegionSet {
    pub regions: Vec<Region>,
    pub skipped_regions: usize,
    pub skipped_pixels: usize,
}

pub fn extract_regions(depth: &DepthMap, mask: &SemanticMask, cfg: &SiglConfig) -> Result<RegionSet> {
    let (w, h) = (depth.width(), depth.height());
    if mask.width() != w || mask.height() != h {
        return Err(Error::DimensionMismatch(format!(
            "mask {}x{} vs depth {w}x{h}",
            mask.width(),
            mask.height()
        )));
    }
    let eligible = |i: usize| -> Option<(Category, Orientation)> {
        let o = mask.gated_orientation(i, cfg.categories);
        if o == Orientation::Unconstrained || !depth.is_valid(i) {
            return None;
        }
        mask.category(i).map(|c| (c, o))
    };

    let mut candidates: Vec<Region> = Vec::new();
    match cfg.region_mode {
        RegionMode::PerCategory => {
            let mut by_cat: Vec<Option<Region>> = vec![None; Category::ALL.len()];
            for i in 0..w * h {
                if let Some((c, o)) = eligible(i) {
                    by_cat[c as usize]
                        .get_or_insert_with(|| Region {
                            category: c,
                            orientation: o,
                            pixels: Vec::new(),
                        })
                        .pixels
                        .push(i);
                }
            }
            candidates.extend(by_cat.into_iter().flatten());
            candidates.sort_by_key(|r| r.pixels[0]);
        }
        RegionMode::Components => {
            let mut seen = vec![false; w * h];
            let mut stack = Vec::new();
            for start in 0..w * h {
                if seen[start] {
                    continue;
                }
                let Some((cat, orient)) = eligible(start) else {
                    continue;
                };
                seen[start] = true;
                stack.push(start);
                let mut pixels = Vec::new();
                while let Some(i) = stack.pop() {
                    pixels.push(i);
                    let (x, y) = (i % w, i / w);
                    let mut visit = |j: usize| {
                        if !seen[j] && eligible(j).is_some_and(|(c, _)| c == cat) {
                            seen[j] = true;
                            stack.push(j);
                        }
                    };
                    if x > 0 {
                        visit(i - 1);
                    }
                    if x + 1 < w {
                        visit(i + 1);
                    }
                    if y > 0 {
                        visit(i - w);
                    }
                    if y + 1 < h {
                        visit(i + w);
                    }
                }
                pixels.sort_unstable();
                candidates.push(Region {
                    category: cat,
                    orientation: orient,
                    pixels,
                });
            }
        }
    }

    let mut out = RegionSet::default();
    for r in candidates {
        if r.pixels.len() < cfg.min_region_pixels.max(1) {
            out.skipped_regions += 1;
            out.skipped_pixels += r.pixels.len();
        } else {
            out.regions.push(r);
        }
    }
    Ok(out)
}

/// Loss of one region.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionLoss {
    pub category: Category,
    pub orientation: Orientation,
    pub pixel_count: usize,
    /// Unweighted loss (m^2).
    pub loss: f64,
    /// Loss times its orientation weight.
    pub weighted: f64,
    /// Normal the loss was measured along.
    pub normal: Vector3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CategoryLoss {
    pub category: Category,
    pub hp: f64,
    pub vp: f64,
}

/// Per-region and per-category breakdown of the geometric loss.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossReport {
    pub regions: Vec<RegionLoss>,
    /// Unweighted sums per category, only for categories with at least one region.
    pub per_category: Vec<CategoryLoss>,
    /// Unweighted sum over horizontal regions.
    pub hp_total: f64,
    /// Unweighted sum over vertical regions.
    pub vp_total: f64,
    /// `hp_weight * hp_total + vp_weight * vp_total`.
    pub total: f64,
    pub skipped_regions: usize,
    pub skipped_pixels: usize,
}

fn region_inputs(depth: &DepthMap, intr: &CameraIntrinsics, region: &Region) -> (Vec<f64>, Vec<PixelRay>) {
    let w = depth.width();
    let depths = region.pixels.iter().map(|&i| depth.data()[i]).collect();
    let rays = region
        .pixels
        .iter()
        .map(|&i| intr.ray((i % w) as f64, (i / w) as f64))
        .collect();
    (depths, rays)
}

fn evaluate_region(
    depths: &[f64],
    rays: &[PixelRay],
    region: &Region,
    gravity: &GravityVector,
    cfg: &SiglConfig,
) -> Result<(f64, Vector3<f64>)> {
    let points = points_from_rays(depths, rays);
    let centered = center_points(&points)?;
    Ok(match region.orientation {
        Orientation::Horizontal => (centered.projection_variance(gravity.vector()), *gravity.vector()),
        Orientation::Vertical => match cfg.vertical {
            VerticalSolver::Sampled(k) => {
                let fit = sampled_from_centered(&centered, &SampledDirections::new(gravity, k)?);
                (fit.loss, fit.direction)
            }
            VerticalSolver::Exact => {
                let fit = exact_from_centered(&centered, gravity);
                (fit.loss, fit.normal)
            }
        },
        Orientation::Unconstrained => unreachable!("unconstrained pixels never form regions"),
    })
}

fn run(
    depth: &DepthMap,
    intr: &CameraIntrinsics,
    gravity: &GravityVector,
    mask: &SemanticMask,
    cfg: &SiglConfig,
    mut grad: Option<&mut [f64]>,
) -> Result<LossReport> {
    if !intr.matches(depth) {
        return Err(Error::DimensionMismatch(format!(
            "depth map {}x{} vs intrinsics {}x{}",
            depth.width(),
            depth.height(),
            intr.width(),
            intr.height()
        )));
    }
    let regions = extract_regions(depth, mask, cfg)?;
    let mut report = LossReport {
        skipped_regions: regions.skipped_regions,
        skipped_pixels: regions.skipped_pixels,
        ..LossReport::default()
    };
    let mut per_cat = [(0.0f64, 0.0f64, false); 7];
    for region in &regions.regions {
        let (depths, rays) = region_inputs(depth, intr, region);
        let (loss, normal) = evaluate_region(&depths, &rays, region, gravity, cfg)?;
        let weight = match region.orientation {
            Orientation::Horizontal => cfg.hp_weight,
            _ => cfg.vp_weight,
        };
        let slot = &mut per_cat[region.category as usize];
        slot.2 = true;
        match region.orientation {
            Orientation::Horizontal => {
                report.hp_total += loss;
                slot.0 += loss;
            }
            _ => {
                report.vp_total += loss;
                slot.1 += loss;
            }
        }
        if let Some(g) = grad.as_deref_mut() {
            if weight != 0.0 {
                let local = fixed_direction_grad(&depths, &rays, &normal);
                for (&i, gi) in region.pixels.iter().zip(local) {
                    g[i] += weight * gi;
                }
            }
        }
        report.regions.push(RegionLoss {
            category: region.category,
            orientation: region.orientation,
            pixel_count: region.pixels.len(),
            loss,
            weighted: weight * loss,
            normal,
        });
    }
    report.per_category = Category::ALL
        .iter()
        .zip(per_cat)
        .filter(|(_, s)| s.2)
        .map(|(&category, (hp, vp, _))| CategoryLoss { category, hp, vp })
        .collect();
    report.total = cfg.hp_weight * report.hp_total + cfg.vp_weight * report.vp_total;
    Ok(report)
}

/// Weighted geometric loss over every gated region of `depth`.
pub fn sigl_total(
    depth: &DepthMap,
    intr: &CameraIntrinsics,
    gravity: &GravityVector,
    mask: &SemanticMask,
    cfg: &SiglConfig,
) -> Result<LossReport> {
    run(depth, intr, gravity, mask, cfg, None)
}

/// [`sigl_total`] plus its gradient with respect to every pixel's depth. Pixels outside
/// the evaluated regions get exactly zero.
pub fn sigl_gradient(
    depth: &DepthMap,
    intr: &CameraIntrinsics,
    gravity: &GravityVector,
    mask: &SemanticMask,
    cfg: &SiglConfig,
) -> Result<(LossReport, Vec<f64>)> {
    let mut grad = vec![0.0; depth.data().len()];
    let report = run(depth, intr, gravity, mask, cfg, Some(&mut grad))?;
    Ok((report, grad))
}

/// Unweighted sum of per-region plane-projection variances: `L_HP` on horizontal regions
/// and exact `L_VP` on vertical ones. Region formation follows `cfg`; weights and the
/// vertical solver are ignored.
pub fn plane_variance(
    depth: &DepthMap,
    intr: &CameraIntrinsics,
    gravity: &GravityVector,
    mask: &SemanticMask,
    cfg: &SiglConfig,
) -> Result<f64> {
    let exact = SiglConfig {
        hp_weight: 1.0,
        vp_weight: 1.0,
        vertical: VerticalSolver::Exact,
        ..cfg.clone()
    };
    Ok(run(depth, intr, gravity, mask, &exact, None)?.total)
}
