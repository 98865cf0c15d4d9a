//! Depth error and accuracy metrics over sparse ground truth.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::{check_same_dims, DepthMap};

/// Predictions are clamped to at least this depth.
pub const MIN_DEPTH: f64 = 1e-3;

/// Half-open pixel window `rows [top, bottom) x cols [left, right)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvaluationCrop {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl EvaluationCrop {
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            top: 0,
            bottom: height,
            left: 0,
            right: width,
        }
    }

    /// Window from fractional bounds, each truncated to an integer pixel index.
    pub fn from_fractions(width: usize, height: usize, rows: (f64, f64), cols: (f64, f64)) -> Result<Self> {
        let ok = |(a, b): (f64, f64)| (0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b) && a < b;
        if !ok(rows) || !ok(cols) {
            return Err(Error::invalid(format!(
                "crop fractions must satisfy 0 <= lo < hi <= 1, got rows {rows:?} cols {cols:?}"
            )));
        }
        let at = |f: f64, n: usize| ((f * n as f64) as usize).min(n);
        Ok(Self {
            top: at(rows.0, height),
            bottom: at(rows.1, height),
            left: at(cols.0, width),
            right: at(cols.1, width),
        })
    }

    /// The common KITTI evaluation crop that drops the sky band and image borders.
    pub fn garg(width: usize, height: usize) -> Self {
        Self::from_fractions(width, height, (0.4081, 0.9919), (0.0359, 0.9640)).expect("constant fractions are valid")
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        y >= self.top && y < self.bottom && x >= self.left && x < self.right
    }
}

/// Crop selection resolved against each image's size.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum CropMode {
    #[default]
    Full,
    Garg,
    Fractions {
        rows: (f64, f64),
        cols: (f64, f64),
    },
}

impl CropMode {
    pub fn resolve(&self, width: usize, height: usize) -> Result<EvaluationCrop> {
        match *self {
            CropMode::Full => Ok(EvaluationCrop::full(width, height)),
            CropMode::Garg => Ok(EvaluationCrop::garg(width, height)),
            CropMode::Fractions { rows, cols } => EvaluationCrop::from_fractions(width, height, rows, cols),
        }
    }
}

impl std::str::FromStr for CropMode {
    type Err = Error;

    /// `full`, `garg`, or `top,bottom,left,right` as fractions.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" | "none" => Ok(CropMode::Full),
            "garg" => Ok(CropMode::Garg),
            other => {
                let v: Vec<f64> = other
                    .split(',')
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::invalid(format!("bad crop '{s}'")))?;
                if v.len() != 4 {
                    return Err(Error::invalid(format!(
                        "crop needs 'full', 'garg' or four fractions, got '{s}'"
                    )));
                }
                Ok(CropMode::Fractions {
                    rows: (v[0], v[1]),
                    cols: (v[2], v[3]),
                })
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    /// Maximum depth in meters; predictions are clamped to `[MIN_DEPTH, cap]`.
    pub cap: f64,
    /// Drop ground-truth pixels deeper than `cap`.
    pub filter_gt_by_cap: bool,
    pub crop: CropMode,
}

impl EvalOptions {
    pub fn with_cap(cap: f64) -> Self {
        Self { cap, ..Self::default() }
    }
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            cap: 80.0,
            filter_gt_by_cap: true,
            crop: CropMode::Full,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub log10: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub valid: usize,
    pub cap: f64,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "name,abs_rel,sq_rel,rmse,rmse_log,log10,a1,a2,a3,valid,cap";

    pub fn csv_row(&self, name: &str) -> String {
        let mut s = String::new();
        write!(
            s,
            "{name},{},{},{},{},{},{},{},{},{},{}",
            self.abs_rel,
            self.sq_rel,
            self.rmse,
            self.rmse_log,
            self.log10,
            self.a1,
            self.a2,
            self.a3,
            self.valid,
            self.cap
        )
        .unwrap();
        s
    }
}

fn pairs<'a>(
    pred: &'a DepthMap,
    gt: &'a DepthMap,
    opts: &'a EvalOptions,
) -> Result<impl Iterator<Item = (usize, f64, f64)> + 'a> {
    check_same_dims(pred, gt, "prediction vs ground truth")?;
    if !(opts.cap.is_finite() && opts.cap > MIN_DEPTH) {
        return Err(Error::invalid(format!("cap must exceed {MIN_DEPTH}, got {}", opts.cap)));
    }
    let crop = opts.crop.resolve(gt.width(), gt.height())?;
    if let Some(bad) = pred.data().iter().find(|v| v.is_nan()) {
        return Err(Error::NonFinite {
            term: format!("prediction ({bad})"),
        });
    }
    let w = gt.width();
    Ok(gt
        .data()
        .iter()
        .zip(pred.data())
        .enumerate()
        .filter_map(move |(i, (&g, &p))| {
            let keep =
                DepthMap::is_valid_value(g) && crop.contains(i % w, i / w) && !(opts.filter_gt_by_cap && g > opts.cap);
            keep.then(|| (i, p.clamp(MIN_DEPTH, opts.cap), g))
        }))
}

/// Error and accuracy metrics over ground-truth pixels inside the crop.
pub fn evaluate(pred: &DepthMap, gt: &DepthMap, opts: &EvalOptions) -> Result<MetricReport> {
    let mut n = 0usize;
    let (mut abs_rel, mut sq_rel, mut sq, mut sq_log, mut log10) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut hits = [0usize; 3];
    for (_, p, g) in pairs(pred, gt, opts)? {
        n += 1;
        let d = p - g;
        abs_rel += d.abs() / g;
        sq_rel += d * d / g;
        sq += d * d;
        let dl = p.ln() - g.ln();
        sq_log += dl * dl;
        log10 += (p.log10() - g.log10()).abs();
        let ratio = (p / g).max(g / p);
        for (k, thr) in [1.25, 1.25f64.powi(2), 1.25f64.powi(3)].into_iter().enumerate() {
            if ratio < thr {
                hits[k] += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptyEvaluation(
            "no valid ground-truth pixels inside the crop and cap".into(),
        ));
    }
    let nf = n as f64;
    Ok(MetricReport {
        abs_rel: abs_rel / nf,
        sq_rel: sq_rel / nf,
        rmse: (sq / nf).sqrt(),
        rmse_log: (sq_log / nf).sqrt(),
        log10: log10 / nf,
        a1: hits[0] as f64 / nf,
        a2: hits[1] as f64 / nf,
        a3: hits[2] as f64 / nf,
        valid: n,
        cap: opts.cap,
    })
}

/// Mean of each metric over images; `valid` is the total pixel count.
pub fn aggregate(reports: &[MetricReport]) -> Result<MetricReport> {
    let Some(first) = reports.first() else {
        return Err(Error::EmptyEvaluation("no reports to aggregate".into()));
    };
    let n = reports.len() as f64;
    let mean = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Ok(MetricReport {
        abs_rel: mean(|r| r.abs_rel),
        sq_rel: mean(|r| r.sq_rel),
        rmse: mean(|r| r.rmse),
        rmse_log: mean(|r| r.rmse_log),
        log10: mean(|r| r.log10),
        a1: mean(|r| r.a1),
        a2: mean(|r| r.a2),
        a3: mean(|r| r.a3),
        valid: reports.iter().map(|r| r.valid).sum(),
        cap: first.cap,
    })
}

/// Per-pixel absolute relative error on evaluated pixels, NaN elsewhere.
pub fn error_map(pred: &DepthMap, gt: &DepthMap, opts: &EvalOptions) -> Result<Vec<f64>> {
    let mut out = vec![f64::NAN; gt.data().len()];
    for (i, p, g) in pairs(pred, gt, opts)? {
        out[i] = (p - g).abs() / g;
    }
    Ok(out)
}

/// Densifies sparse depth by linear interpolation over a Delaunay triangulation of the
/// valid pixels, with nearest-sample fill outside their convex hull. Valid input pixels
/// keep their exact values.
pub fn interpolate_sparse(gt: &DepthMap) -> Result<DepthMap> {
    let (w, h) = (gt.width(), gt.height());
    let samples: Vec<(usize, usize, f64)> = gt
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &z)| DepthMap::is_valid_value(z))
        .map(|(i, &z)| (i % w, i / w, z))
        .collect();
    if samples.len() == gt.data().len() {
        return Ok(gt.clone());
    }
    let too_few = || Error::invalid("interpolation needs at least 3 non-collinear valid pixels");
    if samples.len() < 3 {
        return Err(too_few());
    }
    let points: Vec<delaunator::Point> = samples
        .iter()
        .map(|&(x, y, _)| delaunator::Point {
            x: x as f64,
            y: y as f64,
        })
        .collect();
    let tri = delaunator::triangulate(&points);
    if tri.triangles.is_empty() {
        return Err(too_few());
    }

    let mut out = vec![f64::NAN; w * h];
    for t in tri.triangles.chunks_exact(3) {
        let [a, b, c] = [t[0], t[1], t[2]].map(|k| samples[k]);
        let (ax, ay, bx, by, cx, cy) = (a.0 as f64, a.1 as f64, b.0 as f64, b.1 as f64, c.0 as f64, c.1 as f64);
        let det = (by - cy) * (ax - cx) + (cx - bx) * (ay - cy);
        if det == 0.0 {
            continue;
        }
        let x0 = a.0.min(b.0).min(c.0);
        let x1 = a.0.max(b.0).max(c.0);
        let y0 = a.1.min(b.1).min(c.1);
        let y1 = a.1.max(b.1).max(c.1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (px, py) = (x as f64, y as f64);
                let l1 = ((by - cy) * (px - cx) + (cx - bx) * (py - cy)) / det;
                let l2 = ((cy - ay) * (px - cx) + (ax - cx) * (py - cy)) / det;
                let l3 = 1.0 - l1 - l2;
                const EPS: f64 = -1e-12;
                if l1 >= EPS && l2 >= EPS && l3 >= EPS {
                    out[y * w + x] = l1 * a.2 + l2 * b.2 + l3 * c.2;
                }
            }
        }
    }
    for &(x, y, z) in &samples {
        out[y * w + x] = z;
    }
    fill_nearest(&mut out, w, h, &samples);
    DepthMap::from_vec(w, h, out)
}

/// Fills NaN entries with the value of the nearest sample, searching outward over a
/// bucket grid.
fn fill_nearest(out: &mut [f64], w: usize, h: usize, samples: &[(usize, usize, f64)]) {
    const CELL: usize = 16;
    let (gw, gh) = (w.div_ceil(CELL), h.div_ceil(CELL));
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); gw * gh];
    for (k, &(x, y, _)) in samples.iter().enumerate() {
        buckets[(y / CELL) * gw + x / CELL].push(k);
    }
    for y in 0..h {
        for x in 0..w {
            if !out[y * w + x].is_nan() {
                continue;
            }
            let (cx, cy) = ((x / CELL) as isize, (y / CELL) as isize);
            let mut best: Option<(usize, usize)> = None;
            for ring in 0..gw.max(gh) as isize {
                // Anything in ring r is at least (r - 1) * CELL pixels away.
                if let Some((d2, _)) = best {
                    let reach = ((ring - 1).max(0) as usize) * CELL;
                    if reach * reach > d2 {
                        break;
                    }
                }
                for by in cy - ring..=cy + ring {
                    for bx in cx - ring..=cx + ring {
                        let on_ring = (by - cy).abs() == ring || (bx - cx).abs() == ring;
                        if !on_ring || bx < 0 || by < 0 || bx >= gw as isize || by >= gh as isize {
                            continue;
                        }
                        for &k in &buckets[by as usize * gw + bx as usize] {
                            let (sx, sy, _) = samples[k];
                            let d2 = sx.abs_diff(x).pow(2) + sy.abs_diff(y).pow(2);
                            if best.is_none_or(|(b, bk)| d2 < b || (d2 == b && k < bk)) {
                                best = Some((d2, k));
                            }
                        }
                    }
                }
            }
            if let Some((_, k)) = best {
                out[y * w + x] = samples[k].2;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(w: usize, h: usize, v: Vec<f64>) -> DepthMap {
        DepthMap::from_vec(w, h, v).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let gt = DepthMap::from_fn(6, 4, |x, y| 1.0 + x as f64 + 2.0 * y as f64).unwrap();
        let r = evaluate(&gt, &gt, &EvalOptions::default()).unwrap();
        assert_eq!(
            (r.abs_rel, r.sq_rel, r.rmse, r.rmse_log, r.log10),
            (0.0, 0.0, 0.0, 0.0, 0.0)
        );
        assert_eq!((r.a1, r.a2, r.a3), (1.0, 1.0, 1.0));
        assert_eq!(r.valid, 24);
    }

    #[test]
    fn doubled_prediction() {
        let gt = DepthMap::from_fn(5, 5, |x, y| 2.0 + (x * y) as f64).unwrap();
        let pred = DepthMap::from_fn(5, 5, |x, y| 2.0 * (2.0 + (x * y) as f64)).unwrap();
        let r = evaluate(&pred, &gt, &EvalOptions::default()).unwrap();
        assert_eq!(r.abs_rel, 1.0);
        assert_eq!((r.a1, r.a2, r.a3), (0.0, 0.0, 0.0));
        assert!((r.rmse_log - 2f64.ln()).abs() < 1e-15);
        assert!((r.log10 - 2f64.log10()).abs() < 1e-15);
    }

    #[test]
    fn single_pixel_hand_values() {
        let gt = map(2, 1, vec![10.0, 0.0]);
        let pred = map(2, 1, vec![11.0, 5.0]);
        let r = evaluate(&pred, &gt, &EvalOptions::default()).unwrap();
        assert_eq!(r.valid, 1);
        assert!((r.abs_rel - 0.1).abs() < 1e-15);
        assert!((r.sq_rel - 0.1).abs() < 1e-15);
        assert!((r.rmse - 1.0).abs() < 1e-15);
        assert_eq!((r.a1, r.a2, r.a3), (1.0, 1.0, 1.0));
    }

    #[test]
    fn empty_and_mismatch() {
        let gt = map(2, 1, vec![0.0, 0.0]);
        assert!(matches!(
            evaluate(&gt, &gt, &EvalOptions::default()),
            Err(Error::EmptyEvaluation(_))
        ));
        let other = map(1, 2, vec![1.0, 1.0]);
        assert!(evaluate(&other, &map(2, 1, vec![1.0, 1.0]), &EvalOptions::default()).is_err());
    }

    #[test]
    fn cap_filters_and_clamps() {
        let gt = map(3, 1, vec![10.0, 60.0, 79.0]);
        let pred = map(3, 1, vec![100.0, 60.0, 0.0]);
        let r50 = evaluate(&pred, &gt, &EvalOptions::with_cap(50.0)).unwrap();
        let r80 = evaluate(&pred, &gt, &EvalOptions::with_cap(80.0)).unwrap();
        assert_eq!(r50.valid, 1);
        assert_eq!(r80.valid, 3);
        // 100 clamps to 50 under cap 50.
        assert!((r50.abs_rel - 4.0).abs() < 1e-15);
        let keep_all = EvalOptions {
            filter_gt_by_cap: false,
            ..EvalOptions::with_cap(50.0)
        };
        assert_eq!(evaluate(&pred, &gt, &keep_all).unwrap().valid, 3);
    }

    #[test]
    fn garg_crop_bounds() {
        let c = EvaluationCrop::garg(1242, 375);
        assert_eq!((c.top, c.bottom, c.left, c.right), (153, 371, 44, 1197));
        assert!(!c.contains(0, 200));
        assert!(c.contains(600, 200));
        assert_eq!("garg".parse::<CropMode>().unwrap(), CropMode::Garg);
        assert!("0.1,0.2".parse::<CropMode>().is_err());
    }

    #[test]
    fn aggregate_means() {
        let a = MetricReport {
            abs_rel: 1.0,
            sq_rel: 2.0,
            rmse: 3.0,
            rmse_log: 4.0,
            log10: 5.0,
            a1: 0.0,
            a2: 0.5,
            a3: 1.0,
            valid: 10,
            cap: 80.0,
        };
        let b = MetricReport {
            abs_rel: 3.0,
            valid: 30,
            ..a
        };
        let m = aggregate(&[a, b]).unwrap();
        assert_eq!(m.abs_rel, 2.0);
        assert_eq!(m.valid, 40);
        assert!(aggregate(&[]).is_err());
        assert_eq!(
            MetricReport::CSV_HEADER.split(',').count(),
            a.csv_row("x").split(',').count()
        );
    }

    #[test]
    fn nan_prediction_is_numerical_error() {
        let gt = map(2, 1, vec![1.0, 1.0]);
        let pred = map(2, 1, vec![1.0, f64::NAN]);
        assert!(evaluate(&pred, &gt, &EvalOptions::default())
            .unwrap_err()
            .is_numerical());
    }

    #[test]
    fn interpolation_cases() {
        let dense = DepthMap::from_fn(4, 3, |x, y| 1.0 + (x + y) as f64).unwrap();
        assert_eq!(interpolate_sparse(&dense).unwrap(), dense);

        // Two samples on a row plus a third below: the row midpoint is their average.
        let mut v = vec![0.0; 5 * 3];
        v[0] = 2.0;
        v[4] = 6.0;
        v[2 * 5 + 2] = 9.0;
        let out = interpolate_sparse(&map(5, 3, v)).unwrap();
        assert!((out.get(2, 0) - 4.0).abs() < 1e-12);
        assert_eq!(out.get(0, 0), 2.0);
        assert_eq!(out.get(2, 2), 9.0);
        assert!(out.data().iter().all(|z| z.is_finite() && *z > 0.0));

        let mut line = vec![0.0; 5 * 3];
        line[0] = 1.0;
        line[2] = 1.0;
        line[4] = 1.0;
        assert!(interpolate_sparse(&map(5, 3, line)).is_err());
        assert!(interpolate_sparse(&map(2, 1, vec![1.0, 0.0])).is_err());
    }
}
