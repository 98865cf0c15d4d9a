//! On-disk formats.
//!
//! * Depth PNG: 16-bit grayscale, `meters = raw / 256`, raw 0 marks a missing value.
//! * Label PNG: 8-bit grayscale class ids.
//! * Image PNG: 8- or 16-bit gray/RGB(A); alpha is dropped.
//! * PFM: single-channel `Pf` float maps, stored as `f32`.
//! * Key-value text: `key = value` per line, `#` comments. Used for calibration, gravity,
//!   category mappings and refinement config.
//! * IMU CSV: header row naming the columns; acceleration pairs or roll/pitch/yaw.
//! * Poses: one line per frame, 12 numbers (`R` row-major then `t`) or `-` for none.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::gravity::{AccelPair, GravityVector, Rotation};
use crate::grid::{DepthMap, Image, ScalarGrid};
use crate::semantics::{Category, CategoryMapping, DefaultClass, Orientation, SemanticMask};
use crate::warp::Pose;

/// Largest allowed deviation of `R^T R` from identity in calibration files.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_err(path))
}

struct RawPng {
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    bytes: Vec<u8>,
}

fn decode_png(path: &Path, expand: bool) -> Result<RawPng> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    if expand {
        decoder.set_transformations(png::Transformations::EXPAND);
    }
    let mut reader = decoder
        .read_info()
        .map_err(|e| format_err(path, format!("not a readable PNG: {e}")))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| format_err(path, "PNG too large"))?;
    let mut bytes = vec![0; size];
    let info = reader
        .next_frame(&mut bytes)
        .map_err(|e| format_err(path, format!("corrupt PNG data: {e}")))?;
    bytes.truncate(info.buffer_size());
    Ok(RawPng {
        width: info.width as usize,
        height: info.height as usize,
        color: info.color_type,
        depth: info.bit_depth,
        bytes,
    })
}

fn encode_png(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    bytes: &[u8],
) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(depth);
    let wrap = |e: png::EncodingError| format_err(path, format!("PNG encoding failed: {e}"));
    let mut writer = enc.write_header().map_err(wrap)?;
    writer.write_image_data(bytes).map_err(wrap)?;
    writer.finish().map_err(wrap)
}

/// Sparse depth from a 16-bit PNG. Raw 0 becomes depth 0 (invalid).
pub fn read_depth_png(path: &Path) -> Result<DepthMap> {
    let raw = decode_png(path, false)?;
    if raw.color != png::ColorType::Grayscale || raw.depth != png::BitDepth::Sixteen {
        return Err(format_err(
            path,
            format!(
                "depth PNG must be 16-bit single-channel, got {:?} {:?}",
                raw.color, raw.depth
            ),
        ));
    }
    let data = raw
        .bytes
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / 256.0)
        .collect();
    DepthMap::from_vec(raw.width, raw.height, data)
}

/// Writes depth as `round(256 * meters)`; invalid pixels become 0. Depths that would not
/// survive the encoding (raw 0 or above 65535) are rejected.
pub fn write_depth_png(path: &Path, depth: &DepthMap) -> Result<()> {
    let mut bytes = Vec::with_capacity(depth.data().len() * 2);
    for &z in depth.data() {
        let raw = if DepthMap::is_valid_value(z) {
            let r = (z * 256.0).round();
            if !(1.0..=65535.0).contains(&r) {
                return Err(format_err(
                    path,
                    format!("depth {z} m is outside the 16-bit PNG range [1/256, 255.99]"),
                ));
            }
            r as u16
        } else {
            0
        };
        bytes.extend_from_slice(&raw.to_be_bytes());
    }
    encode_png(
        path,
        depth.width(),
        depth.height(),
        png::ColorType::Grayscale,
        png::BitDepth::Sixteen,
        &bytes,
    )
}

/// 8-bit class-id image.
pub fn read_label_ids(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let raw = decode_png(path, false)?;
    if raw.color != png::ColorType::Grayscale || raw.depth != png::BitDepth::Eight {
        return Err(format_err(
            path,
            format!(
                "label PNG must be 8-bit single-channel, got {:?} {:?}",
                raw.color, raw.depth
            ),
        ));
    }
    Ok((raw.width, raw.height, raw.bytes))
}

/// Class-id PNG resolved through `mapping`.
pub fn read_label_png(path: &Path, mapping: &CategoryMapping) -> Result<SemanticMask> {
    let (w, h, ids) = read_label_ids(path)?;
    SemanticMask::from_class_ids(w, h, ids, mapping)
}

pub fn write_label_png(path: &Path, width: usize, height: usize, ids: &[u8]) -> Result<()> {
    if ids.len() != width * height {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for a {width}x{height} image",
            ids.len()
        )));
    }
    encode_png(
        path,
        width,
        height,
        png::ColorType::Grayscale,
        png::BitDepth::Eight,
        ids,
    )
}

/// Gray or RGB image scaled to `[0, 1]`. Palette and low bit depths are expanded, alpha is
/// dropped.
pub fn read_image_png(path: &Path) -> Result<Image> {
    let raw = decode_png(path, true)?;
    let (src_ch, out_ch) = match raw.color {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        png::ColorType::Indexed => return Err(format_err(path, "palette PNG was not expanded")),
    };
    let samples: Vec<f64> = match raw.depth {
        png::BitDepth::Sixteen => raw
            .bytes
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / 65535.0)
            .collect(),
        png::BitDepth::Eight => raw.bytes.iter().map(|&b| b as f64 / 255.0).collect(),
        other => return Err(format_err(path, format!("unsupported bit depth {other:?}"))),
    };
    let data = samples
        .chunks_exact(src_ch)
        .flat_map(|px| px[..out_ch].iter().copied())
        .collect();
    Image::from_vec(raw.width, raw.height, out_ch, data)
}

/// 8-bit PNG; values are rounded to the nearest of 256 levels.
pub fn write_image_png(path: &Path, img: &Image) -> Result<()> {
    let bytes: Vec<u8> = img.data().iter().map(|v| (v * 255.0).round() as u8).collect();
    let color = if img.channels() == 3 {
        png::ColorType::Rgb
    } else {
        png::ColorType::Grayscale
    };
    encode_png(path, img.width(), img.height(), color, png::BitDepth::Eight, &bytes)
}

/// Visualization of a scalar field: `lo` maps to black, `hi` to white, non-finite values
/// to black.
pub fn write_gray_png(path: &Path, width: usize, height: usize, values: &[f64], lo: f64, hi: f64) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::DimensionMismatch(format!(
            "{} values for a {width}x{height} image",
            values.len()
        )));
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let bytes: Vec<u8> = values
        .iter()
        .map(|&v| {
            if v.is_finite() {
                (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect();
    encode_png(
        path,
        width,
        height,
        png::ColorType::Grayscale,
        png::BitDepth::Eight,
        &bytes,
    )
}

/// Single-channel PFM. Rows are stored bottom-up, as the format requires.
pub fn write_pfm<G: ScalarGrid>(path: &Path, map: &G) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    let (w, h) = (map.width(), map.height());
    write!(out, "Pf\n{w} {h}\n-1.0\n").map_err(io_err(path))?;
    for y in (0..h).rev() {
        for x in 0..w {
            out.write_all(&(map.get(x, y) as f32).to_le_bytes())
                .map_err(io_err(path))?;
        }
    }
    out.flush().map_err(io_err(path))
}

/// Reads a single-channel PFM as `(width, height, row-major values)`.
pub fn read_pfm(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let mut bytes = Vec::new();
    File::open(path)
        .map_err(io_err(path))?
        .read_to_end(&mut bytes)
        .map_err(io_err(path))?;
    // Header: three whitespace-terminated tokens, the last followed by one byte.
    let mut pos = 0;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(format_err(path, "truncated PFM header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if tokens[0] != "Pf" {
        return Err(format_err(
            path,
            format!("expected single-channel 'Pf', got '{}'", tokens[0]),
        ));
    }
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| format_err(path, format!("bad PFM header value '{s}'")))
    };
    let (w, h, scale) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
    if !(w >= 1.0 && h >= 1.0 && w.fract() == 0.0 && h.fract() == 0.0) || scale == 0.0 {
        return Err(format_err(path, "invalid PFM dimensions or scale"));
    }
    let (w, h) = (w as usize, h as usize);
    let body = bytes.get(pos..).unwrap_or(&[]);
    if body.len() != w * h * 4 {
        return Err(format_err(
            path,
            format!("PFM body has {} bytes, expected {}", body.len(), w * h * 4),
        ));
    }
    let mut out = vec![0.0; w * h];
    for (k, chunk) in body.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if scale < 0.0 {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let (x, row) = (k % w, k / w);
        out[(h - 1 - row) * w + x] = v as f64;
    }
    Ok((w, h, out))
}

/// Ordered `key = value` pairs with the line each came from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    source_name: String,
    entries: BTreeMap<String, (String, usize)>,
}

impl KeyValues {
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::parse(
                    source_name,
                    i + 1,
                    format!("expected 'key = value', got '{line}'"),
                ));
            };
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::parse(source_name, i + 1, "empty key"));
            }
            if entries.insert(k.to_string(), (v.trim().to_string(), i + 1)).is_some() {
                return Err(Error::parse(source_name, i + 1, format!("duplicate key '{k}'")));
            }
        }
        Ok(Self {
            source_name: source_name.to_string(),
            entries,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, &path.display().to_string())
    }

    pub fn source_name(&self) -> &str {
        &self.source_name
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn line(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |(_, l)| *l)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::parse(&self.source_name, 0, format!("missing key '{key}'")))
    }

    /// Parses `key` if present.
    pub fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>().map_err(|_| {
                    Error::parse(
                        &self.source_name,
                        self.line(key),
                        format!("bad value '{v}' for '{key}'"),
                    )
                })
            })
            .transpose()
    }

    pub fn parse_required<T: FromStr>(&self, key: &str) -> Result<T> {
        self.require(key)?;
        Ok(self.parse_opt(key)?.expect("present"))
    }

    /// Whitespace- or comma-separated numbers, exactly `n` of them.
    pub fn numbers(&self, key: &str, n: usize) -> Result<Option<Vec<f64>>> {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        let err = |m: String| Error::parse(&self.source_name, self.line(key), m);
        let vals: Vec<f64> = v
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| err(format!("'{t}' is not a number in '{key}'")))
            })
            .collect::<Result<_>>()?;
        if vals.len() != n {
            return Err(err(format!("'{key}' needs {n} numbers, got {}", vals.len())));
        }
        Ok(Some(vals))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub intrinsics: CameraIntrinsics,
    /// Body-to-camera rotation, if given.
    pub r_cb: Option<Rotation>,
}

impl Calibration {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let width: usize = kv.parse_required("width")?;
        let height: usize = kv.parse_required("height")?;
        let intrinsics = CameraIntrinsics::new(
            kv.parse_required("fx")?,
            kv.parse_required("fy")?,
            kv.parse_required("cx")?,
            kv.parse_required("cy")?,
            width,
            height,
        )?;
        let matrix = kv.numbers("R_cb", 9)?;
        let rpy = kv.numbers("R_cb_rpy", 3)?;
        let r_cb = match (matrix, rpy) {
            (Some(_), Some(_)) => {
                return Err(Error::parse(
                    kv.source_name(),
                    kv.line("R_cb_rpy"),
                    "give either R_cb or R_cb_rpy, not both",
                ))
            }
            (Some(m), None) => Some(Rotation::with_tolerance(
                Matrix3::from_row_slice(&m),
                ROTATION_TOLERANCE,
            )?),
            (None, Some(a)) => Some(Rotation::from_rpy(a[0], a[1], a[2])),
            (None, None) => None,
        };
        Ok(Self { intrinsics, r_cb })
    }

    pub fn to_text(&self) -> String {
        let k = &self.intrinsics;
        let mut s = format!(
            "fx = {}\nfy = {}\ncx = {}\ncy = {}\nwidth = {}\nheight = {}\n",
            k.fx(),
            k.fy(),
            k.cx(),
            k.cy(),
            k.width(),
            k.height()
        );
        if let Some(r) = &self.r_cb {
            let vals: Vec<String> = r.to_row_vec().iter().map(|v| v.to_string()).collect();
            s.push_str(&format!("R_cb = {}\n", vals.join(" ")));
        }
        s
    }
}

pub fn read_calibration(path: &Path) -> Result<Calibration> {
    Calibration::from_key_values(&KeyValues::from_file(path)?)
}

pub fn write_calibration(path: &Path, calib: &Calibration) -> Result<()> {
    write_text(path, &calib.to_text())
}

/// Camera-frame gravity from `gravity = gx gy gz`, or composed from `R_cb` (or
/// `R_cb_rpy`) and `R_bs`.
pub fn read_gravity(path: &Path) -> Result<GravityVector> {
    let kv = KeyValues::from_file(path)?;
    if let Some(g) = kv.numbers("gravity", 3)? {
        return GravityVector::new(Vector3::new(g[0], g[1], g[2]));
    }
    let r_cb = match (kv.numbers("R_cb", 9)?, kv.numbers("R_cb_rpy", 3)?) {
        (Some(m), _) => Rotation::with_tolerance(Matrix3::from_row_slice(&m), ROTATION_TOLERANCE)?,
        (None, Some(a)) => Rotation::from_rpy(a[0], a[1], a[2]),
        (None, None) => {
            return Err(Error::parse(
                kv.source_name(),
                0,
                "missing key 'gravity' (or 'R_cb' with 'R_bs')",
            ))
        }
    };
    let r_bs = match kv.numbers("R_bs", 9)? {
        Some(m) => Rotation::with_tolerance(Matrix3::from_row_slice(&m), ROTATION_TOLERANCE)?,
        None => return Err(Error::parse(kv.source_name(), 0, "missing key 'R_bs'")),
    };
    Ok(crate::gravity::gravity_from_spatial(&r_cb, &r_bs))
}

pub fn write_gravity(path: &Path, gravity: &GravityVector) -> Result<()> {
    let g = gravity.vector();
    write_text(path, &format!("gravity = {} {} {}\n", g.x, g.y, g.z))
}

/// One IMU sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ImuRecord {
    Accel {
        timestamp: Option<f64>,
        pair: AccelPair,
    },
    /// Body orientation as roll/pitch/yaw (radians); `body_to_spatial` applies
    /// `Rz(yaw) Ry(pitch) Rx(roll)`.
    Orientation {
        timestamp: Option<f64>,
        body_to_spatial: Rotation,
    },
}

impl ImuRecord {
    /// Spatial-to-body rotation for orientation records.
    pub fn r_bs(&self) -> Option<Rotation> {
        match self {
            ImuRecord::Orientation { body_to_spatial, .. } => Some(body_to_spatial.transpose()),
            ImuRecord::Accel { .. } => None,
        }
    }
}

const ACCEL_COLUMNS: [&str; 6] = ["abx", "aby", "abz", "asx", "asy", "asz"];
const RPY_COLUMNS: [&str; 3] = ["roll", "pitch", "yaw"];

/// Parses IMU CSV text. The variant is picked from the header: acceleration columns
/// `abx..asz` take precedence over `roll,pitch,yaw`.
pub fn parse_imu_csv(text: &str, source_name: &str) -> Result<Vec<ImuRecord>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let Some((hline, header)) = lines.next() else {
        return Err(Error::parse(source_name, 1, "missing header row"));
    };
    let cols: Vec<String> = header.split(',').map(|c| c.trim().to_ascii_lowercase()).collect();
    let find = |name: &str| cols.iter().position(|c| c == name);
    let ts = find("timestamp");
    let accel: Vec<Option<usize>> = ACCEL_COLUMNS.iter().map(|c| find(c)).collect();
    let rpy: Vec<Option<usize>> = RPY_COLUMNS.iter().map(|c| find(c)).collect();
    let is_accel = accel.iter().all(Option::is_some);
    let is_rpy = rpy.iter().all(Option::is_some);
    if !is_accel && !is_rpy {
        let missing = if accel.iter().any(Option::is_some) || !rpy.iter().any(Option::is_some) {
            ACCEL_COLUMNS
                .iter()
                .zip(&accel)
                .filter(|(_, p)| p.is_none())
                .map(|(c, _)| *c)
                .collect::<Vec<_>>()
        } else {
            RPY_COLUMNS
                .iter()
                .zip(&rpy)
                .filter(|(_, p)| p.is_none())
                .map(|(c, _)| *c)
                .collect()
        };
        return Err(Error::parse(
            source_name,
            hline + 1,
            format!("missing column(s) {}", missing.join(", ")),
        ));
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(Error::parse(
                source_name,
                line_no,
                format!("expected {} fields, got {}", cols.len(), fields.len()),
            ));
        }
        let num = |idx: usize| -> Result<f64> {
            let v = fields[idx].parse::<f64>().map_err(|_| {
                Error::parse(
                    source_name,
                    line_no,
                    format!("'{}' is not a number in column '{}'", fields[idx], cols[idx]),
                )
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::parse(
                    source_name,
                    line_no,
                    format!("non-finite value in column '{}'", cols[idx]),
                ))
            }
        };
        let timestamp = ts.map(num).transpose()?;
        if is_accel {
            let v: Vec<f64> = accel.iter().map(|p| num(p.unwrap())).collect::<Result<_>>()?;
            out.push(ImuRecord::Accel {
                timestamp,
                pair: AccelPair {
                    body: Vector3::new(v[0], v[1], v[2]),
                    spatial: Vector3::new(v[3], v[4], v[5]),
                },
            });
        } else {
            let v: Vec<f64> = rpy.iter().map(|p| num(p.unwrap())).collect::<Result<_>>()?;
            out.push(ImuRecord::Orientation {
                timestamp,
                body_to_spatial: Rotation::from_rpy(v[0], v[1], v[2]),
            });
        }
    }
    Ok(out)
}

pub fn read_imu_csv(path: &Path) -> Result<Vec<ImuRecord>> {
    parse_imu_csv(&read_text(path)?, &path.display().to_string())
}

/// Acceleration pairs from a record list, ignoring orientation records.
pub fn accel_pairs(records: &[ImuRecord]) -> Vec<AccelPair> {
    records
        .iter()
        .filter_map(|r| match r {
            ImuRecord::Accel { pair, .. } => Some(*pair),
            ImuRecord::Orientation { .. } => None,
        })
        .collect()
}

/// Poses file: line `i` holds the pose of frame `i` or `-`.
pub fn parse_poses(text: &str, source_name: &str) -> Result<Vec<Option<Pose>>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line == "-" {
            out.push(None);
            continue;
        }
        let err = |m: String| Error::parse(source_name, i + 1, m);
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| err(format!("'{t}' is not a number"))))
            .collect::<Result<_>>()?;
        if v.len() != 12 {
            return Err(err(format!("pose needs 12 numbers, got {}", v.len())));
        }
        let rotation = Rotation::with_tolerance(Matrix3::from_row_slice(&v[..9]), ROTATION_TOLERANCE)
            .map_err(|e| err(e.to_string()))?;
        out.push(Some(Pose::new(rotation, Vector3::new(v[9], v[10], v[11]))));
    }
    Ok(out)
}

pub fn read_poses(path: &Path) -> Result<Vec<Option<Pose>>> {
    parse_poses(&read_text(path)?, &path.display().to_string())
}

pub fn poses_to_text(poses: &[Option<Pose>]) -> String {
    let mut s = String::new();
    for p in poses {
        match p {
            None => s.push_str("-\n"),
            Some(p) => {
                let mut v = p.rotation.to_row_vec();
                v.extend(p.translation.iter());
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                s.push_str(&parts.join(" "));
                s.push('\n');
            }
        }
    }
    s
}

/// Category mapping matching [`CategoryMapping::cityscapes`].
pub const DEFAULT_CATEGORY_MAPPING: &str = "\
# class.<id> = <name> <category>
default = unconstrained
class.0 = road flat
class.1 = sidewalk flat
class.2 = building construction
class.3 = wall construction
class.4 = fence construction
class.5 = pole object
class.6 = traffic_light object
class.7 = traffic_sign object
class.8 = vegetation nature
class.9 = terrain nature
class.10 = sky sky
class.11 = person human
class.12 = rider human
class.13 = car vehicle
class.14 = truck vehicle
class.15 = bus vehicle
class.16 = train vehicle
class.17 = motorcycle vehicle
class.18 = bicycle vehicle
orientation.flat = horizontal
orientation.sky = horizontal
orientation.human = vertical
orientation.vehicle = vertical
orientation.construction = vertical
orientation.object = vertical
orientation.nature = vertical
";

/// Parses `default = reject|unconstrained|<category>`, `class.<id> = <name> <category>`
/// and `orientation.<category> = horizontal|vertical|unconstrained`.
pub fn parse_category_mapping(text: &str, source_name: &str) -> Result<CategoryMapping> {
    let kv = KeyValues::parse(text, source_name)?;
    let at = |key: &str, m: String| Error::parse(source_name, kv.line(key), m);
    let default = match kv.get("default").map(str::to_ascii_lowercase).as_deref() {
        None | Some("reject") => DefaultClass::Reject,
        Some("unconstrained") => DefaultClass::Unconstrained,
        Some(other) => DefaultClass::Category(other.parse().map_err(|e: Error| at("default", e.to_string()))?),
    };
    let mut mapping = CategoryMapping::empty(default);
    for key in kv.keys() {
        let value = kv.get(key).unwrap();
        if let Some(id) = key.strip_prefix("class.") {
            let id: u8 = id
                .parse()
                .map_err(|_| at(key, format!("class id '{id}' is not in 0..=255")))?;
            let parts: Vec<&str> = value.split_whitespace().collect();
            let [name, cat] = parts[..] else {
                return Err(at(key, format!("expected '<name> <category>', got '{value}'")));
            };
            let cat: Category = cat.parse().map_err(|e: Error| at(key, e.to_string()))?;
            mapping.insert(id, name, cat);
        } else if let Some(cat) = key.strip_prefix("orientation.") {
            let cat: Category = cat.parse().map_err(|e: Error| at(key, e.to_string()))?;
            let o: Orientation = value.parse().map_err(|e: Error| at(key, e.to_string()))?;
            mapping.set_orientation(cat, o);
        } else if key != "default" {
            return Err(at(key, format!("unknown key '{key}'")));
        }
    }
    Ok(mapping)
}

pub fn read_category_mapping(path: &Path) -> Result<CategoryMapping> {
    parse_category_mapping(&read_text(path)?, &path.display().to_string())
}

pub fn category_mapping_to_text(mapping: &CategoryMapping) -> String {
    let mut s = String::new();
    let default = match mapping.default_class() {
        DefaultClass::Reject => "reject".to_string(),
        DefaultClass::Unconstrained => "unconstrained".to_string(),
        DefaultClass::Category(c) => c.name().to_string(),
    };
    s.push_str(&format!("default = {default}\n"));
    for (id, e) in mapping.classes() {
        s.push_str(&format!("class.{id} = {} {}\n", e.name, e.category));
    }
    for c in Category::ALL {
        s.push_str(&format!("orientation.{c} = {}\n", mapping.orientation(c).name()));
    }
    s
}

/// Sorted regular files in `dir` with the given extension.
pub fn list_files(dir: &Path, extension: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case(extension)) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_png_round_trip_and_convention() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.png");
        let depth = DepthMap::from_vec(3, 2, vec![1.0, 0.0, 80.5, 0.00390625, 255.0, 12.25]).unwrap();
        write_depth_png(&p, &depth).unwrap();
        let back = read_depth_png(&p).unwrap();
        assert_eq!(back, depth);
        assert_eq!(back.get(0, 0), 1.0);
        assert!(!back.is_valid(1));

        let too_far = DepthMap::from_vec(1, 1, vec![300.0]).unwrap();
        assert!(write_depth_png(&p, &too_far).is_err());
    }

    #[test]
    fn depth_png_rejects_8_bit() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.png");
        write_label_png(&p, 2, 1, &[1, 2]).unwrap();
        match read_depth_png(&p) {
            Err(Error::Format { path, .. }) => assert_eq!(path, p),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn labels_and_mapping() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.png");
        write_label_png(&p, 2, 2, &[0, 0, 0, 0]).unwrap();
        let m = read_label_png(&p, &CategoryMapping::cityscapes()).unwrap();
        assert!((0..4).all(|i| m.orientation(i) == Orientation::Horizontal));

        write_label_png(&p, 2, 1, &[0, 42]).unwrap();
        let strict = CategoryMapping::empty(DefaultClass::Reject);
        assert!(matches!(read_label_png(&p, &strict), Err(Error::UnmappedClasses { ids }) if ids == vec![0, 42]));
        let lenient = read_label_png(&p, &CategoryMapping::cityscapes()).unwrap();
        assert_eq!(lenient.orientation(1), Orientation::Unconstrained);
    }

    #[test]
    fn shipped_mapping_matches_builtin() {
        let parsed = parse_category_mapping(DEFAULT_CATEGORY_MAPPING, "default").unwrap();
        assert_eq!(parsed, CategoryMapping::cityscapes());
        let again = parse_category_mapping(&category_mapping_to_text(&parsed), "again").unwrap();
        assert_eq!(again, parsed);
        let cat = |name: &str| parsed.resolve(parsed.class_id(name).unwrap()).unwrap().unwrap();
        for n in ["road", "sidewalk"] {
            assert_eq!(cat(n), Category::Flat);
        }
        for n in ["building", "wall", "fence"] {
            assert_eq!(cat(n), Category::Construction);
        }
        for n in ["car", "truck", "bus", "train", "motorcycle", "bicycle"] {
            assert_eq!(cat(n), Category::Vehicle);
        }
        assert!(parse_category_mapping("class.300 = x flat", "m").is_err());
        assert!(parse_category_mapping("class.3 = x lava", "m").is_err());
    }

    #[test]
    fn image_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("i.png");
        let data: Vec<f64> = (0..12).map(|i| (i * 20) as f64 / 255.0).collect();
        let img = Image::from_vec(2, 2, 3, data).unwrap();
        write_image_png(&p, &img).unwrap();
        assert_eq!(read_image_png(&p).unwrap(), img);
    }

    #[test]
    fn pfm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pfm");
        let m = DepthMap::from_fn(3, 2, |x, y| 0.5 + x as f64 + 10.0 * y as f64).unwrap();
        write_pfm(&p, &m).unwrap();
        let (w, h, v) = read_pfm(&p).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(v, m.data());
    }

    #[test]
    fn calibration_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("calib.txt");
        let calib = Calibration {
            intrinsics: CameraIntrinsics::new(721.5377, 721.5377, 609.5593, 172.854, 1242, 375).unwrap(),
            r_cb: Some(Rotation::from_rpy(0.1, -0.2, 0.3)),
        };
        write_calibration(&p, &calib).unwrap();
        assert_eq!(read_calibration(&p).unwrap(), calib);

        let kv = |t: &str| Calibration::from_key_values(&KeyValues::parse(t, "c").unwrap());
        let base = "fx = 1\nfy = 1\ncx = 0\ncy = 0\nwidth = 2\nheight = 2\n";
        assert_eq!(
            kv(&format!("{base}R_cb = 1 0 0 0 1 0 0 0 1")).unwrap().r_cb,
            Some(Rotation::identity())
        );
        match kv("fy = 1\ncx = 0\ncy = 0\nwidth = 2\nheight = 2\n") {
            Err(Error::Parse { message, .. }) => assert!(message.contains("'fx'")),
            other => panic!("{other:?}"),
        }
        assert!(kv(&base.replace("fx = 1", "fx = -1")).is_err());
        assert!(kv(&format!("{base}R_cb = 1 0 0 0 1 0 0 0 1.001")).is_err());
    }

    #[test]
    fn imu_variants_and_errors() {
        let recs = parse_imu_csv("timestamp,abx,aby,abz,asx,asy,asz\n0.0,0,0,9.8,0,0,9.8\n", "imu").unwrap();
        assert_eq!(recs.len(), 1);
        let pairs = accel_pairs(&recs);
        assert_eq!(pairs[0].body, Vector3::new(0.0, 0.0, 9.8));
        assert_eq!(pairs[0].spatial, Vector3::new(0.0, 0.0, 9.8));

        let rpy = parse_imu_csv("timestamp,roll,pitch,yaw\n1,0,0,0\n", "imu").unwrap();
        assert_eq!(rpy[0].r_bs(), Some(Rotation::identity()));

        match parse_imu_csv("timestamp,abx,aby,abz,asx,asz\n", "imu") {
            Err(Error::Parse { message, .. }) => assert!(message.contains("asy")),
            other => panic!("{other:?}"),
        }
        match parse_imu_csv("abx,aby,abz,asx,asy,asz\n0,0,1,0,0,1\n0,0,x,0,0,1\n", "imu") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn poses_round_trip() {
        let poses = vec![
            None,
            Some(Pose::new(
                Rotation::from_rpy(0.01, 0.02, 0.03),
                Vector3::new(0.1, -0.2, 1.5),
            )),
        ];
        assert_eq!(parse_poses(&poses_to_text(&poses), "p").unwrap(), poses);
        assert!(parse_poses("1 0 0\n", "p").is_err());
    }

    #[test]
    fn key_values_errors() {
        assert!(KeyValues::parse("a = 1\na = 2\n", "k").is_err());
        assert!(KeyValues::parse("just words\n", "k").is_err());
        let kv = KeyValues::parse("a = 1 # note\n\n# c\nb=x\n", "k").unwrap();
        assert_eq!(kv.parse_required::<f64>("a").unwrap(), 1.0);
        assert!(kv.parse_required::<f64>("b").is_err());
    }
}
