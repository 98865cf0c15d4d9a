//! Dense per-pixel containers: depth, inverse depth, disparity and images.
//!
//! All maps are stored row-major, `index = y * width + x`.

use crate::error::{Error, Result};

/// Read access shared by every scalar map.
pub trait ScalarGrid {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn values(&self) -> &[f64];

    fn len(&self) -> usize {
        self.width() * self.height()
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, x: usize, y: usize) -> f64 {
        self.values()[y * self.width() + x]
    }
}

macro_rules! scalar_map {
    ($(#[$meta:meta])* $name:ident, valid = |$v:ident| $valid:expr) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name {
            width: usize,
            height: usize,
            data: Vec<f64>,
        }

        impl $name {
            pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
                if width == 0 || height == 0 {
                    return Err(Error::invalid(format!(
                        "{} must be at least 1x1, got {}x{}",
                        stringify!($name),
                        width,
                        height
                    )));
                }
                if data.len() != width * height {
                    return Err(Error::DimensionMismatch(format!(
                        "{}: {} values for a {}x{} map",
                        stringify!($name),
                        data.len(),
                        width,
                        height
                    )));
                }
                Ok(Self { width, height, data })
            }

            pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
                Self::from_vec(width, height, vec![value; width * height])
            }

            pub fn from_fn(
                width: usize,
                height: usize,
                mut f: impl FnMut(usize, usize) -> f64,
            ) -> Result<Self> {
                let mut data = Vec::with_capacity(width * height);
                for y in 0..height {
                    for x in 0..width {
                        data.push(f(x, y));
                    }
                }
                Self::from_vec(width, height, data)
            }

            pub fn width(&self) -> usize {
                self.width
            }

            pub fn height(&self) -> usize {
                self.height
            }

            pub fn data(&self) -> &[f64] {
                &self.data
            }

            pub fn data_mut(&mut self) -> &mut [f64] {
                &mut self.data
            }

            pub fn into_vec(self) -> Vec<f64> {
                self.data
            }

            pub fn get(&self, x: usize, y: usize) -> f64 {
                self.data[y * self.width + x]
            }

            pub fn set(&mut self, x: usize, y: usize, value: f64) {
                self.data[y * self.width + x] = value;
            }

            pub fn is_valid_value($v: f64) -> bool {
                $valid
            }

            pub fn is_valid(&self, index: usize) -> bool {
                Self::is_valid_value(self.data[index])
            }

            pub fn valid_count(&self) -> usize {
                self.data.iter().filter(|&&v| Self::is_valid_value(v)).count()
            }

            pub fn same_shape<G: ScalarGrid>(&self, other: &G) -> bool {
                self.width == other.width() && self.height == other.height()
            }
        }

        impl ScalarGrid for $name {
            fn width(&self) -> usize {
                self.width
            }
            fn height(&self) -> usize {
                self.height
            }
            fn values(&self) -> &[f64] {
                &self.data
            }
        }
    };
}

scalar_map!(
    /// Metric depth `Z` along the optical axis. Non-positive or non-finite entries are invalid
    /// (sparse ground truth stores 0).
    DepthMap,
    valid = |v| v.is_finite() && v > 0.0
);

scalar_map!(
    /// Inverse depth `1/Z` in 1/m. The refiner's optimization variable.
    InverseDepthMap,
    valid = |v| v.is_finite() && v > 0.0
);

scalar_map!(
    /// Horizontal disparity in pixels. NaN marks an invalid pixel.
    DisparityMap,
    valid = |v| v.is_finite() && v >= 0.0
);

impl DepthMap {
    /// Inverse of every valid entry; invalid entries become 0.
    pub fn to_inverse(&self) -> InverseDepthMap {
        let data = self
            .data
            .iter()
            .map(|&z| if Self::is_valid_value(z) { 1.0 / z } else { 0.0 })
            .collect();
        InverseDepthMap {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

impl InverseDepthMap {
    pub fn to_depth(&self) -> DepthMap {
        let data = self
            .data
            .iter()
            .map(|&r| if Self::is_valid_value(r) { 1.0 / r } else { 0.0 })
            .collect();
        DepthMap {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Stereo disparity `fx * baseline / Z = fx * baseline * rho`.
    pub fn to_disparity(&self, fx_times_baseline: f64) -> DisparityMap {
        let data = self
            .data
            .iter()
            .map(|&r| {
                if Self::is_valid_value(r) {
                    fx_times_baseline * r
                } else {
                    f64::NAN
                }
            })
            .collect();
        DisparityMap {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

/// Image with 1 or 3 interleaved channels, intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "image must be at least 1x1, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!(
                "image must have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("image value {bad} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Single-channel image from a per-pixel function. Values are clamped into `[0, 1]`.
    pub fn gray_from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self::from_vec(width, height, 1, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn matches_grid<G: ScalarGrid>(&self, grid: &G) -> bool {
        self.width == grid.width() && self.height == grid.height()
    }
}

pub(crate) fn check_same_dims<A: ScalarGrid, B: ScalarGrid>(a: &A, b: &B, what: &str) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(format!(
            "{what}: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}
