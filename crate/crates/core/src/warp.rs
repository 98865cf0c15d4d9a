//! Photometric data terms built on bilinear sampling.
//!
//! Stereo view synthesis compares `I_L(x, y)` with `I_R(x + D_L(x, y), y)`, taking the
//! disparity sign literally: a rectified pair satisfies this when the second camera sits
//! at `-baseline` along x. The monocular term back-projects reference pixels, moves them
//! by the relative pose and samples the neighbor frame at their projection.
//!
//! Pixels whose sample falls outside the image or behind the camera are dropped from the
//! average instead of being clamped.

use nalgebra::Vector3;

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::gravity::Rotation;
use crate::grid::{DepthMap, DisparityMap, Image, ScalarGrid};

const MAX_CHANNELS: usize = 3;
const EDGE_SLACK: f64 = 1e-9;

/// Interpolated value and its spatial derivatives, per channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BilinearSample {
    channels: usize,
    value: [f64; MAX_CHANNELS],
    dx: [f64; MAX_CHANNELS],
    dy: [f64; MAX_CHANNELS],
}

impl BilinearSample {
    pub fn values(&self) -> &[f64] {
        &self.value[..self.channels]
    }
    /// Derivative along x within the interpolation cell.
    pub fn dx(&self) -> &[f64] {
        &self.dx[..self.channels]
    }
    pub fn dy(&self) -> &[f64] {
        &self.dy[..self.channels]
    }
}

/// Cell origin and fractional offset along one axis; `None` outside `[0, n - 1]`.
#[inline]
fn cell(coord: f64, n: usize) -> Option<(usize, usize, f64)> {
    let hi = (n - 1) as f64;
    if !(coord >= -EDGE_SLACK && coord <= hi + EDGE_SLACK) {
        return None;
    }
    // Round-trip projections may land a few ulps outside the border.
    let coord = coord.clamp(0.0, hi);
    if n == 1 {
        return Some((0, 0, 0.0));
    }
    let i0 = (coord.floor() as usize).min(n - 2);
    Some((i0, i0 + 1, coord - i0 as f64))
}

fn bilinear_raw(width: usize, height: usize, channels: usize, data: &[f64], x: f64, y: f64) -> Option<BilinearSample> {
    let (x0, x1, a) = cell(x, width)?;
    let (y0, y1, b) = cell(y, height)?;
    let mut s = BilinearSample {
        channels,
        value: [0.0; MAX_CHANNELS],
        dx: [0.0; MAX_CHANNELS],
        dy: [0.0; MAX_CHANNELS],
    };
    let at = |xx: usize, yy: usize, c: usize| data[(yy * width + xx) * channels + c];
    for c in 0..channels {
        let v00 = at(x0, y0, c);
        let v10 = at(x1, y0, c);
        let v01 = at(x0, y1, c);
        let v11 = at(x1, y1, c);
        // Terms with zero weight are skipped so that invalid (NaN) neighbors outside the
        // support do not poison the sample.
        let mut value = 0.0;
        for (v, wgt) in [
            (v00, (1.0 - a) * (1.0 - b)),
            (v10, a * (1.0 - b)),
            (v01, (1.0 - a) * b),
            (v11, a * b),
        ] {
            if wgt != 0.0 {
                value += wgt * v;
            }
        }
        s.value[c] = value;
        if x1 != x0 {
            s.dx[c] = (1.0 - b) * (v10 - v00) + b * (v11 - v01);
        }
        if y1 != y0 {
            s.dy[c] = (1.0 - a) * (v01 - v00) + a * (v11 - v10);
        }
    }
    Some(s)
}

/// Bilinear interpolation at continuous `(x, y)`; `None` outside `[0, w-1] x [0, h-1]`.
pub fn sample_bilinear(img: &Image, x: f64, y: f64) -> Option<BilinearSample> {
    bilinear_raw(img.width(), img.height(), img.channels(), img.data(), x, y)
}

/// Bilinear interpolation of a scalar map; `None` outside the map or when the support
/// touches an invalid entry.
pub fn sample_scalar<G: ScalarGrid>(grid: &G, x: f64, y: f64) -> Option<f64> {
    let s = bilinear_raw(grid.width(), grid.height(), 1, grid.values(), x, y)?;
    s.value[0].is_finite().then_some(s.value[0])
}

/// Mean L1 residual and the number of pixels it was averaged over.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhotometricLoss {
    pub value: f64,
    pub valid: usize,
}

impl PhotometricLoss {
    fn from_sum(sum: f64, valid: usize) -> Self {
        Self {
            value: if valid > 0 { sum / valid as f64 } else { 0.0 },
            valid,
        }
    }
}

fn check_stereo(left: &Image, right: &Image, disp: &DisparityMap) -> Result<()> {
    if !left.same_shape(right) {
        return Err(Error::DimensionMismatch(format!(
            "left {}x{}x{} vs right {}x{}x{}",
            left.width(),
            left.height(),
            left.channels(),
            right.width(),
            right.height(),
            right.channels()
        )));
    }
    if !left.matches_grid(disp) {
        return Err(Error::DimensionMismatch(format!(
            "image {}x{} vs disparity {}x{}",
            left.width(),
            left.height(),
            disp.width(),
            disp.height()
        )));
    }
    Ok(())
}

fn stereo_impl(
    left: &Image,
    right: &Image,
    disp: &DisparityMap,
    mut grad: Option<&mut Vec<f64>>,
) -> Result<PhotometricLoss> {
    check_stereo(left, right, disp)?;
    let w = left.width();
    let mut sum = 0.0;
    let mut valid = 0;
    for (i, &d) in disp.data().iter().enumerate() {
        if !DisparityMap::is_valid_value(d) {
            continue;
        }
        let (x, y) = (i % w, i / w);
        let Some(s) = sample_bilinear(right, x as f64 + d, y as f64) else {
            continue;
        };
        valid += 1;
        let mut g = 0.0;
        for (c, (&l, &r)) in left.pixel(x, y).iter().zip(s.values()).enumerate() {
            let res = l - r;
            sum += res.abs();
            g -= sign(res) * s.dx()[c];
        }
        if let Some(gr) = grad.as_deref_mut() {
            gr[i] = g;
        }
    }
    if let Some(gr) = grad {
        if valid > 0 {
            let inv = 1.0 / valid as f64;
            gr.iter_mut().for_each(|v| *v *= inv);
        }
    }
    Ok(PhotometricLoss::from_sum(sum, valid))
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `1/|valid| * sum |I_L(x, y) - I_R(x + D_L(x, y), y)|_1`.
pub fn loss_view_synthesis_stereo(left: &Image, right: &Image, disp_left: &DisparityMap) -> Result<PhotometricLoss> {
    stereo_impl(left, right, disp_left, None)
}

/// Stereo view-synthesis loss and its gradient with respect to each disparity. The
/// valid-pixel count is treated as constant.
pub fn loss_view_synthesis_stereo_grad(
    left: &Image,
    right: &Image,
    disp_left: &DisparityMap,
) -> Result<(PhotometricLoss, Vec<f64>)> {
    let mut grad = vec![0.0; disp_left.data().len()];
    let loss = stereo_impl(left, right, disp_left, Some(&mut grad))?;
    Ok((loss, grad))
}

/// `1/|valid| * sum |D_L(x, y) - D_R(x + D_L(x, y), y)|`.
pub fn loss_lr_consistency(disp_left: &DisparityMap, disp_right: &DisparityMap) -> Result<PhotometricLoss> {
    if disp_left.width() != disp_right.width() || disp_left.height() != disp_right.height() {
        return Err(Error::DimensionMismatch(format!(
            "left disparity {}x{} vs right {}x{}",
            disp_left.width(),
            disp_left.height(),
            disp_right.width(),
            disp_right.height()
        )));
    }
    let w = disp_left.width();
    let mut sum = 0.0;
    let mut valid = 0;
    for (i, &d) in disp_left.data().iter().enumerate() {
        if !DisparityMap::is_valid_value(d) {
            continue;
        }
        if let Some(dr) = sample_scalar(disp_right, (i % w) as f64 + d, (i / w) as f64) {
            sum += (d - dr).abs();
            valid += 1;
        }
    }
    Ok(PhotometricLoss::from_sum(sum, valid))
}

/// Rigid transform taking reference-frame points into another camera frame:
/// `X' = R X + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
    /// False when the translation is only known up to scale.
    pub metric: bool,
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
            metric: true,
        }
    }

    pub fn identity() -> Self {
        Self::new(Rotation::identity(), Vector3::zeros())
    }

    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.apply(p) + self.translation
    }

    pub fn with_scaled_translation(&self, scale: f64) -> Self {
        Self {
            translation: self.translation * scale,
            ..*self
        }
    }

    /// Pose of the inverse transform.
    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -rt.apply(&self.translation),
            metric: self.metric,
        }
    }
}

/// Warped image plus per-pixel validity. Invalid pixels hold 0.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpedImage {
    pub image: Image,
    pub valid: Vec<bool>,
}

struct Projected {
    u: f64,
    v: f64,
    /// `d(u, v)/dZ` at the reference pixel.
    du_dz: f64,
    dv_dz: f64,
}

fn project_through(intr: &CameraIntrinsics, pose: &Pose, x: usize, y: usize, depth: f64) -> Option<Projected> {
    let ray = *intr.ray(x as f64, y as f64).vector();
    let a = pose.rotation.apply(&ray);
    let p = pose.transform(&(ray * depth));
    if !(p.z > 0.0) {
        return None;
    }
    let (u, v) = intr.project_unchecked(&p);
    let z2 = p.z * p.z;
    Some(Projected {
        u,
        v,
        du_dz: intr.fx() * (a.x * p.z - p.x * a.z) / z2,
        dv_dz: intr.fy() * (a.y * p.z - p.y * a.z) / z2,
    })
}

/// Resamples `src` into the reference view using reference depth and the pose taking
/// reference points into the source frame.
pub fn warp_monocular(src: &Image, depth: &DepthMap, pose: &Pose, intr: &CameraIntrinsics) -> Result<WarpedImage> {
    if !src.matches_grid(depth) || !intr.matches(depth) {
        return Err(Error::DimensionMismatch(format!(
            "image {}x{}, depth {}x{}, intrinsics {}x{}",
            src.width(),
            src.height(),
            depth.width(),
            depth.height(),
            intr.width(),
            intr.height()
        )));
    }
    let (w, h, ch) = (src.width(), src.height(), src.channels());
    let mut data = vec![0.0; w * h * ch];
    let mut valid = vec![false; w * h];
    for (i, &z) in depth.data().iter().enumerate() {
        if !DepthMap::is_valid_value(z) {
            continue;
        }
        let Some(p) = project_through(intr, pose, i % w, i / w, z) else {
            continue;
        };
        if let Some(s) = sample_bilinear(src, p.u, p.v) {
            for (c, v) in s.values().iter().enumerate() {
                data[i * ch + c] = v.clamp(0.0, 1.0);
            }
            valid[i] = true;
        }
    }
    Ok(WarpedImage {
        image: Image::from_vec(w, h, ch, data)?,
        valid,
    })
}

/// Reference frame index and the neighbor frames compared against it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemporalWindow {
    pub reference: usize,
    pub neighbors: Vec<usize>,
}

impl TemporalWindow {
    pub fn new(reference: usize, neighbors: Vec<usize>) -> Result<Self> {
        if neighbors.is_empty() {
            return Err(Error::invalid("temporal window needs at least one neighbor"));
        }
        if neighbors.contains(&reference) {
            return Err(Error::invalid("reference frame cannot be its own neighbor"));
        }
        Ok(Self { reference, neighbors })
    }
}

/// Frames with the pose of each frame relative to the reference
/// (`poses[i]` maps reference-frame points into frame `i`).
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    pub frames: Vec<Image>,
    pub poses: Vec<Option<Pose>>,
    pub window: TemporalWindow,
}

impl FrameSequence {
    /// Checks indices, shapes and that every neighbor has a pose.
    pub fn validate(&self) -> Result<()> {
        let n = self.frames.len();
        if self.poses.len() != n {
            return Err(Error::invalid(format!("{} poses for {} frames", self.poses.len(), n)));
        }
        let idx = std::iter::once(self.window.reference).chain(self.window.neighbors.iter().copied());
        for i in idx {
            if i >= n {
                return Err(Error::invalid(format!("frame index {i} out of range ({n} frames)")));
            }
        }
        let reference = &self.frames[self.window.reference];
        for &i in &self.window.neighbors {
            if self.poses[i].is_none() {
                return Err(Error::invalid(format!("missing pose for neighbor frame {i}")));
            }
            if !self.frames[i].same_shape(reference) {
                return Err(Error::DimensionMismatch(format!(
                    "frame {i} differs in shape from the reference frame"
                )));
            }
        }
        Ok(())
    }

    pub fn reference(&self) -> &Image {
        &self.frames[self.window.reference]
    }
}

fn mono_impl(
    seq: &FrameSequence,
    depth: &DepthMap,
    intr: &CameraIntrinsics,
    mut grad: Option<&mut Vec<f64>>,
) -> Result<PhotometricLoss> {
    seq.validate()?;
    let reference = seq.reference();
    if !reference.matches_grid(depth) || !intr.matches(depth) {
        return Err(Error::DimensionMismatch(format!(
            "reference {}x{}, depth {}x{}, intrinsics {}x{}",
            reference.width(),
            reference.height(),
            depth.width(),
            depth.height(),
            intr.width(),
            intr.height()
        )));
    }
    let w = depth.width();
    let n_neighbors = seq.window.neighbors.len() as f64;
    let mut total = 0.0;
    let mut total_valid = 0;
    let mut local = vec![0.0; if grad.is_some() { depth.data().len() } else { 0 }];
    for &ni in &seq.window.neighbors {
        let pose = seq.poses[ni].as_ref().expect("validated");
        let src = &seq.frames[ni];
        let mut sum = 0.0;
        let mut valid = 0usize;
        local.iter_mut().for_each(|v| *v = 0.0);
        for (i, &z) in depth.data().iter().enumerate() {
            if !DepthMap::is_valid_value(z) {
                continue;
            }
            let (x, y) = (i % w, i / w);
            let Some(p) = project_through(intr, pose, x, y, z) else {
                continue;
            };
            let Some(s) = sample_bilinear(src, p.u, p.v) else {
                continue;
            };
            valid += 1;
            let mut g = 0.0;
            for (c, (&r, &v)) in reference.pixel(x, y).iter().zip(s.values()).enumerate() {
                let res = r - v;
                sum += res.abs();
                g -= sign(res) * (s.dx()[c] * p.du_dz + s.dy()[c] * p.dv_dz);
            }
            if !local.is_empty() {
                local[i] = g;
            }
        }
        if valid > 0 {
            let scale = 1.0 / (n_neighbors * valid as f64);
            total += sum * scale;
            if let Some(gr) = grad.as_deref_mut() {
                for (gi, li) in gr.iter_mut().zip(&local) {
                    *gi += li * scale;
                }
            }
        }
        total_valid += valid;
    }
    Ok(PhotometricLoss {
        value: total,
        valid: total_valid,
    })
}

/// Mean over neighbors of the mean L1 difference between the reference frame and each
/// neighbor warped into it. `valid` sums the valid pixels over all neighbors.
pub fn loss_view_synthesis_mono(
    seq: &FrameSequence,
    depth: &DepthMap,
    intr: &CameraIntrinsics,
) -> Result<PhotometricLoss> {
    mono_impl(seq, depth, intr, None)
}

/// Monocular view-synthesis loss and its gradient with respect to each depth.
pub fn loss_view_synthesis_mono_grad(
    seq: &FrameSequence,
    depth: &DepthMap,
    intr: &CameraIntrinsics,
) -> Result<(PhotometricLoss, Vec<f64>)> {
    let mut grad = vec![0.0; depth.data().len()];
    let loss = mono_impl(seq, depth, intr, Some(&mut grad))?;
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Image {
        Image::gray_from_fn(w, h, |x, y| ((x * 7 + y * 3) % 11) as f64 / 10.0).unwrap()
    }

    #[test]
    fn integer_coordinates_are_exact() {
        let img = ramp(6, 4);
        for y in 0..4 {
            for x in 0..6 {
                let s = sample_bilinear(&img, x as f64, y as f64).unwrap();
                assert_eq!(s.values(), &[img.get(x, y, 0)]);
            }
        }
    }

    #[test]
    fn midpoint_and_bounds() {
        let img = Image::from_vec(2, 1, 1, vec![0.0, 1.0]).unwrap();
        assert_eq!(sample_bilinear(&img, 0.5, 0.0).unwrap().values(), &[0.5]);
        assert!(sample_bilinear(&img, 1.0001, 0.0).is_none());
        assert!(sample_bilinear(&img, -0.0001, 0.0).is_none());
        assert!(sample_bilinear(&img, f64::NAN, 0.0).is_none());
        let c = Image::from_vec(3, 3, 1, vec![0.4; 9]).unwrap();
        for &(x, y) in &[(0.3, 1.7), (2.0, 2.0), (1.5, 0.0)] {
            assert!((sample_bilinear(&c, x, y).unwrap().values()[0] - 0.4).abs() < 1e-15);
        }
    }

    #[test]
    fn stereo_zero_for_identical_images() {
        let img = ramp(8, 5);
        let d = DisparityMap::filled(8, 5, 0.0).unwrap();
        let l = loss_view_synthesis_stereo(&img, &img, &d).unwrap();
        assert_eq!(l.value, 0.0);
        assert_eq!(l.valid, 40);
    }

    #[test]
    fn stereo_shifted_pair() {
        let (w, h, shift) = (12, 4, 3usize);
        let left = ramp(w, h);
        // I_R(x + d) = I_L(x)
        let right = Image::gray_from_fn(w, h, |x, y| if x >= shift { left.get(x - shift, y, 0) } else { 0.5 }).unwrap();
        let d = DisparityMap::filled(w, h, shift as f64).unwrap();
        let at_truth = loss_view_synthesis_stereo(&left, &right, &d).unwrap();
        assert!(at_truth.value < 1e-12);
        assert_eq!(at_truth.valid, (w - shift) * h);
        let d2 = DisparityMap::filled(w, h, (shift + 2) as f64).unwrap();
        let off = loss_view_synthesis_stereo(&left, &right, &d2).unwrap();
        assert!(off.value > at_truth.value);
        assert!(off.valid < at_truth.valid);
    }

    #[test]
    fn stereo_dimension_mismatch() {
        let a = ramp(4, 4);
        let b = ramp(5, 4);
        let d = DisparityMap::filled(4, 4, 0.0).unwrap();
        assert!(matches!(
            loss_view_synthesis_stereo(&a, &b, &d),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn lr_consistency_cases() {
        let z = DisparityMap::filled(6, 3, 0.0).unwrap();
        assert_eq!(loss_lr_consistency(&z, &z).unwrap().value, 0.0);
        let c = DisparityMap::filled(6, 3, 1.5).unwrap();
        assert_eq!(loss_lr_consistency(&c, &c).unwrap().value, 0.0);
        let l = DisparityMap::filled(6, 3, 2.0).unwrap();
        let r = DisparityMap::filled(6, 3, 3.0).unwrap();
        let out = loss_lr_consistency(&l, &r).unwrap();
        assert_eq!(out.value, 1.0);
        assert_eq!(out.valid, 4 * 3);
        let bad = DisparityMap::filled(5, 3, 3.0).unwrap();
        assert!(loss_lr_consistency(&l, &bad).is_err());
    }

    #[test]
    fn identity_warp() {
        let k = CameraIntrinsics::new(20.0, 20.0, 4.0, 3.0, 8, 6).unwrap();
        let img = ramp(8, 6);
        let depth = DepthMap::filled(8, 6, 3.0).unwrap();
        let out = warp_monocular(&img, &depth, &Pose::identity(), &k).unwrap();
        assert!(out.valid.iter().all(|&v| v));
        for (a, b) in out.image.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_translation_scales_about_principal_point() {
        // Fronto-parallel plane at Z = 4, camera moves 2 m forward: X' = X - (0, 0, 2),
        // so every offset from the principal point doubles.
        let k = CameraIntrinsics::new(10.0, 10.0, 8.0, 8.0, 17, 17).unwrap();
        let src = Image::gray_from_fn(17, 17, |x, y| (x as f64 * 0.05 + y as f64 * 0.01).min(1.0)).unwrap();
        let depth = DepthMap::filled(17, 17, 4.0).unwrap();
        let pose = Pose::new(Rotation::identity(), Vector3::new(0.0, 0.0, -2.0));
        let out = warp_monocular(&src, &depth, &pose, &k).unwrap();
        for &(x, y, sx, sy) in &[(8, 8, 8, 8), (9, 8, 10, 8), (8, 11, 8, 14), (5, 6, 2, 4)] {
            assert!(out.valid[y * 17 + x]);
            assert!((out.image.get(x, y, 0) - src.get(sx, sy, 0)).abs() < 1e-12);
        }
        // Offsets beyond half the image leave the frame.
        assert!(!out.valid[0]);
    }

    #[test]
    fn behind_camera_is_invalid() {
        let k = CameraIntrinsics::new(10.0, 10.0, 2.0, 2.0, 5, 5).unwrap();
        let img = ramp(5, 5);
        let depth = DepthMap::filled(5, 5, 1.0).unwrap();
        let pose = Pose::new(Rotation::identity(), Vector3::new(0.0, 0.0, -3.0));
        let out = warp_monocular(&img, &depth, &pose, &k).unwrap();
        assert!(out.valid.iter().all(|&v| !v));
    }

    #[test]
    fn mono_identity_is_zero_and_missing_pose_errors() {
        let k = CameraIntrinsics::new(20.0, 20.0, 4.0, 3.0, 8, 6).unwrap();
        let img = ramp(8, 6);
        let depth = DepthMap::filled(8, 6, 3.0).unwrap();
        let seq = FrameSequence {
            frames: vec![img.clone(), img.clone(), img.clone()],
            poses: vec![Some(Pose::identity()), None, Some(Pose::identity())],
            window: TemporalWindow::new(1, vec![0, 2]).unwrap(),
        };
        let l = loss_view_synthesis_mono(&seq, &depth, &k).unwrap();
        assert!(l.value < 1e-12);
        assert_eq!(l.valid, 96);

        let missing = FrameSequence {
            poses: vec![None, None, Some(Pose::identity())],
            ..seq
        };
        assert!(matches!(
            loss_view_synthesis_mono(&missing, &depth, &k),
            Err(Error::InvalidInput(_))
        ));
        assert!(TemporalWindow::new(0, vec![0]).is_err());
        assert!(TemporalWindow::new(0, vec![]).is_err());
    }
}
