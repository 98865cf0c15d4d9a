//! Pinhole back-projection and perspective projection.
//!
//! Integer pixel `(x, y)` denotes the pixel center at continuous coordinate `(x, y)`;
//! there is no half-pixel offset anywhere in the crate.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::grid::DepthMap;

/// Camera-frame point in meters.
pub type Point3 = Vector3<f64>;

/// Zero-skew calibration matrix `K` together with the image size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(fx.is_finite() && fx > 0.0 && fy.is_finite() && fy > 0.0) {
            return Err(Error::invalid(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::invalid("principal point must be finite"));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "image size must be at least 1x1, got {width}x{height}"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn k(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn k_inv(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64
    }

    /// `K^-1 [x, y, 1]^T`, i.e. the ray whose point at depth `Z` is `ray * Z`.
    pub fn ray(&self, x: f64, y: f64) -> PixelRay {
        PixelRay(Vector3::new((x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0))
    }

    pub fn back_project(&self, x: f64, y: f64, depth: f64) -> Result<Point3> {
        if !(depth.is_finite() && depth > 0.0) {
            return Err(Error::invalid(format!("depth must be positive, got {depth}")));
        }
        if !self.contains(x, y) {
            return Err(Error::invalid(format!(
                "pixel ({x}, {y}) outside {}x{} image",
                self.width, self.height
            )));
        }
        Ok(self.ray(x, y).at_depth(depth))
    }

    pub fn project(&self, point: &Point3) -> Result<(f64, f64)> {
        if !(point.z > 0.0) {
            return Err(Error::BehindCamera(point.z));
        }
        Ok(self.project_unchecked(point))
    }

    /// Projection without the depth check; callers guarantee `z > 0`.
    #[inline]
    pub(crate) fn project_unchecked(&self, point: &Point3) -> (f64, f64) {
        (
            self.fx * point.x / point.z + self.cx,
            self.fy * point.y / point.z + self.cy,
        )
    }

    /// Rays for every pixel, row-major.
    pub fn rays(&self) -> Vec<PixelRay> {
        let mut out = Vec::with_capacity(self.width * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                out.push(self.ray(x as f64, y as f64));
            }
        }
        out
    }

    pub fn matches(&self, depth: &DepthMap) -> bool {
        depth.width() == self.width && depth.height() == self.height
    }
}

/// Back-projection direction with unit third component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelRay(Vector3<f64>);

impl PixelRay {
    pub fn vector(&self) -> &Vector3<f64> {
        &self.0
    }

    #[inline]
    pub fn at_depth(&self, depth: f64) -> Point3 {
        Point3::new(self.0.x * depth, self.0.y * depth, depth)
    }
}

/// Output of [`back_project_map`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BackProjection {
    pub points: Vec<Point3>,
    /// Row-major pixel index of each point.
    pub pixels: Vec<usize>,
    /// Masked pixels dropped because their depth was invalid.
    pub skipped: usize,
}

/// Back-projects every masked pixel in row-major order. `mask == None` selects every pixel.
/// Masked pixels without a valid depth are counted in `skipped` instead of failing.
pub fn back_project_map(depth: &DepthMap, intr: &CameraIntrinsics, mask: Option<&[bool]>) -> Result<BackProjection> {
    if !intr.matches(depth) {
        return Err(Error::DimensionMismatch(format!(
            "depth map {}x{} vs intrinsics {}x{}",
            depth.width(),
            depth.height(),
            intr.width(),
            intr.height()
        )));
    }
    if let Some(m) = mask {
        if m.len() != depth.data().len() {
            return Err(Error::DimensionMismatch(format!(
                "mask has {} entries for {} pixels",
                m.len(),
                depth.data().len()
            )));
        }
    }
    let mut out = BackProjection::default();
    let w = depth.width();
    for (i, &z) in depth.data().iter().enumerate() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        if !DepthMap::is_valid_value(z) {
            out.skipped += 1;
            continue;
        }
        let ray = intr.ray((i % w) as f64, (i / w) as f64);
        out.points.push(ray.at_depth(z));
        out.pixels.push(i);
    }
    Ok(out)
}
