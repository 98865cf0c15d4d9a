//! Edge-aware first-order smoothness on disparity or inverse depth.

use crate::error::{Error, Result};
use crate::grid::{Image, ScalarGrid};

pub const DEFAULT_EDGE_WEIGHT: f64 = 1.0;

fn image_step(img: &Image, a: (usize, usize), b: (usize, usize)) -> f64 {
    let pa = img.pixel(a.0, a.1);
    let pb = img.pixel(b.0, b.1);
    pa.iter().zip(pb).map(|(u, v)| (v - u).abs()).sum::<f64>() / pa.len() as f64
}

fn smoothness_impl<G: ScalarGrid>(
    disp: &G,
    img: &Image,
    edge_weight: f64,
    mut grad: Option<&mut [f64]>,
) -> Result<f64> {
    if !img.matches_grid(disp) {
        return Err(Error::DimensionMismatch(format!(
            "disparity {}x{} vs image {}x{}",
            disp.width(),
            disp.height(),
            img.width(),
            img.height()
        )));
    }
    if !(edge_weight.is_finite() && edge_weight >= 0.0) {
        return Err(Error::invalid(format!("edge weight must be >= 0, got {edge_weight}")));
    }
    let (w, h) = (disp.width(), disp.height());
    if w < 2 || h < 2 {
        return Ok(0.0);
    }
    let d = disp.values();
    let count = ((w - 1) * (h - 1)) as f64;
    let mut sum = 0.0;
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            let i = y * w + x;
            for (j, b) in [(i + 1, (x + 1, y)), (i + w, (x, y + 1))] {
                let diff = d[j] - d[i];
                if !diff.is_finite() {
                    continue;
                }
                let gate = (-edge_weight * image_step(img, (x, y), b)).exp();
                sum += diff.abs() * gate;
                if let Some(g) = grad.as_deref_mut() {
                    let s = if diff > 0.0 {
                        gate
                    } else if diff < 0.0 {
                        -gate
                    } else {
                        0.0
                    };
                    g[j] += s / count;
                    g[i] -= s / count;
                }
            }
        }
    }
    Ok(sum / count)
}

/// Mean over non-border pixels of `|dx d| exp(-a |dx I|) + |dy d| exp(-a |dy I|)` using
/// forward differences. Image differences are averaged over channels. Differences that
/// touch an invalid entry are skipped.
pub fn loss_smoothness<G: ScalarGrid>(disp: &G, img: &Image, edge_weight: f64) -> Result<f64> {
    smoothness_impl(disp, img, edge_weight, None)
}

pub fn loss_smoothness_grad<G: ScalarGrid>(disp: &G, img: &Image, edge_weight: f64) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; disp.len()];
    let loss = smoothness_impl(disp, img, edge_weight, Some(&mut grad))?;
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{DisparityMap, InverseDepthMap};

    fn flat(w: usize, h: usize) -> Image {
        Image::from_vec(w, h, 1, vec![0.5; w * h]).unwrap()
    }

    #[test]
    fn constant_is_zero() {
        let d = DisparityMap::filled(7, 5, 3.0).unwrap();
        assert_eq!(loss_smoothness(&d, &flat(7, 5), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn ramps() {
        let img = flat(6, 4);
        let along_x = DisparityMap::from_fn(6, 4, |x, _| x as f64).unwrap();
        assert!((loss_smoothness(&along_x, &img, 3.0).unwrap() - 1.0).abs() < 1e-15);
        let diagonal = DisparityMap::from_fn(6, 4, |x, y| (x + y) as f64).unwrap();
        assert!((loss_smoothness(&diagonal, &img, 3.0).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn strong_edges_suppress() {
        let checker = Image::gray_from_fn(6, 6, |x, y| if (x + y) % 2 == 0 { 0.0 } else { 1.0 }).unwrap();
        let d = InverseDepthMap::from_fn(6, 6, |x, y| 0.1 + ((x * 3 + y) % 5) as f64).unwrap();
        let weak = loss_smoothness(&d, &checker, 0.0).unwrap();
        let strong = loss_smoothness(&d, &checker, 1e3).unwrap();
        assert!(weak > 1.0);
        assert!(strong < 1e-300);
    }

    #[test]
    fn shape_mismatch() {
        let d = DisparityMap::filled(6, 4, 1.0).unwrap();
        assert!(matches!(
            loss_smoothness(&d, &flat(5, 4), 1.0),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn tiny_maps_are_zero() {
        let d = DisparityMap::from_fn(5, 1, |x, _| x as f64).unwrap();
        assert_eq!(loss_smoothness(&d, &flat(5, 1), 1.0).unwrap(), 0.0);
    }
}
