//! Rate/distortion measurements: PSNR, bits per pixel, Bjøntegaard delta
//! rate and analytic decoder cost.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::raster::ImageBuffer;
use crate::scalar::Scalar;

/// One point of a rate-distortion curve.
#[derive(Clone, Debug, PartialEq)]
pub struct RdPoint {
    pub bpp: f64,
    pub psnr: f64,
    pub label: String,
}

impl RdPoint {
    pub fn new(bpp: f64, psnr: f64, label: impl Into<String>) -> Result<Self> {
        if !(bpp >= 0.0) {
            return Err(invalid(format!("bpp must be nonnegative, got {bpp}")));
        }
        Ok(Self { bpp, psnr, label: label.into() })
    }
}

/// PSNR in dB for unit peak; `+inf` for identical images.
pub fn psnr<F: Scalar>(a: &ImageBuffer<F>, b: &ImageBuffer<F>) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(invalid(format!(
            "cannot compare {}x{} with {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(x, y)| {
            let d = x.to_f64_lossy() - y.to_f64_lossy();
            d * d
        })
        .sum();
    let mse = sum / a.pixels().len() as f64;
    Ok(psnr_from_mse(mse))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// `8 * byte_count / (width * height)`.
pub fn bpp(byte_count: usize, width: usize, height: usize) -> Result<f64> {
    let pixels = width * height;
    if pixels == 0 {
        return Err(invalid("bpp of an empty image"));
    }
    Ok(8.0 * byte_count as f64 / pixels as f64)
}

/// Thousands of multiply-adds per pixel for a dense network with these layer
/// sizes. Bias additions and activations are not counted.
pub fn mac_per_pixel(layer_dims: &[usize]) -> f64 {
    let macs: usize = layer_dims.windows(2).map(|d| d[0] * d[1]).sum();
    macs as f64 / 1000.0
}

/// Least-squares cubic `log10(rate) = c0 + c1 p + c2 p^2 + c3 p^3` over PSNR `p`.
fn fit_log_rate(points: &[RdPoint]) -> Result<[f64; 4]> {
    let n = points.len();
    let a = DMatrix::from_fn(n, 4, |r, c| points[r].psnr.powi(c as i32));
    let b = DVector::from_iterator(n, points.iter().map(|p| p.bpp.log10()));
    let svd = a.svd(true, true);
    let x = svd.solve(&b, 1e-14).map_err(|e| invalid(format!("cubic fit failed: {e}")))?;
    Ok([x[0], x[1], x[2], x[3]])
}

fn integrate_cubic(c: &[f64; 4], lo: f64, hi: f64) -> f64 {
    let antiderivative = |p: f64| c[0] * p + c[1] * p.powi(2) / 2.0 + c[2] * p.powi(3) / 3.0 + c[3] * p.powi(4) / 4.0;
    antiderivative(hi) - antiderivative(lo)
}

fn sorted_curve(points: &[RdPoint], name: &str) -> Result<Vec<RdPoint>> {
    if points.len() < 4 {
        return Err(invalid(format!("{name} curve needs at least 4 points, got {}", points.len())));
    }
    if let Some(p) = points.iter().find(|p| !(p.bpp > 0.0 && p.bpp.is_finite() && p.psnr.is_finite())) {
        return Err(invalid(format!("{name} curve point ({}, {}) is not usable", p.bpp, p.psnr)));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.psnr.total_cmp(&b.psnr));
    if sorted.windows(2).any(|w| w[0].psnr >= w[1].psnr) {
        return Err(invalid(format!("{name} curve PSNR values must be distinct")));
    }
    Ok(sorted)
}

/// Classic Bjøntegaard delta rate in percent: average rate change of `test`
/// relative to `anchor` over their common PSNR interval. Negative means
/// `test` needs fewer bits.
pub fn bd_rate(anchor: &[RdPoint], test: &[RdPoint]) -> Result<f64> {
    let anchor = sorted_curve(anchor, "anchor")?;
    let test = sorted_curve(test, "test")?;
    let lo = anchor[0].psnr.max(test[0].psnr);
    let hi = anchor[anchor.len() - 1].psnr.min(test[test.len() - 1].psnr);
    if lo >= hi {
        return Err(invalid("curves have no overlapping PSNR range"));
    }
    let fa = fit_log_rate(&anchor)?;
    let ft = fit_log_rate(&test)?;
    let avg = (integrate_cubic(&ft, lo, hi) - integrate_cubic(&fa, lo, hi)) / (hi - lo);
    Ok((10f64.powf(avg) - 1.0) * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_examples() {
        let a = ImageBuffer::filled(4, 4, [0.5; 3]).unwrap();
        let b = ImageBuffer::filled(4, 4, [0.6; 3]).unwrap();
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        let black = ImageBuffer::filled(3, 2, [0.0; 3]).unwrap();
        let white = ImageBuffer::filled(3, 2, [1.0; 3]).unwrap();
        assert_eq!(psnr(&black, &white).unwrap(), 0.0);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert!(psnr(&a, &black).is_err());
    }

    #[test]
    fn psnr_matches_elementwise_oracle() {
        let a: Vec<f64> = (0..48).map(|i| ((i * 7919) % 101) as f64 / 100.0).collect();
        let b: Vec<f64> = (0..48).map(|i| ((i * 104_729) % 97) as f64 / 96.0).collect();
        let mut sq = 0.0;
        for i in 0..48 {
            sq += (a[i] - b[i]) * (a[i] - b[i]);
        }
        let oracle = 10.0 * (1.0 / (sq / 48.0)).log10();
        let ia = ImageBuffer::new(4, 4, a).unwrap();
        let ib = ImageBuffer::new(4, 4, b).unwrap();
        assert!((psnr(&ia, &ib).unwrap() - oracle).abs() < 1e-9);
    }

    #[test]
    fn bpp_examples() {
        assert!((bpp(1000, 100, 100).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(bpp(0, 10, 10).unwrap(), 0.0);
        assert!(bpp(10, 0, 10).is_err());
    }

    #[test]
    fn mac_examples() {
        assert!((mac_per_pixel(&[2, 4, 3]) - 0.020).abs() < 1e-15);
        assert!((mac_per_pixel(&[2, 3]) - 0.006).abs() < 1e-15);
    }

    fn curve(points: &[(f64, f64)]) -> Vec<RdPoint> {
        points.iter().map(|&(r, p)| RdPoint::new(r, p, "").unwrap()).collect()
    }

    #[test]
    fn bd_rate_identity_and_doubling() {
        let a = curve(&[(0.1, 24.0), (0.2, 26.5), (0.4, 29.0), (0.8, 31.0), (1.2, 32.2)]);
        assert!(bd_rate(&a, &a).unwrap().abs() < 1e-9);
        let doubled: Vec<RdPoint> = a.iter().map(|p| RdPoint::new(2.0 * p.bpp, p.psnr, "").unwrap()).collect();
        assert!((bd_rate(&a, &doubled).unwrap() - 100.0).abs() < 1e-6);
        assert!((bd_rate(&doubled, &a).unwrap() + 50.0).abs() < 1e-6);
    }

    #[test]
    fn bd_rate_rejects_bad_curves() {
        let a = curve(&[(0.1, 24.0), (0.2, 26.5), (0.4, 29.0), (0.8, 31.0)]);
        assert!(bd_rate(&a[..3], &a).is_err());
        let far = curve(&[(0.1, 40.0), (0.2, 41.0), (0.4, 42.0), (0.8, 43.0)]);
        assert!(bd_rate(&a, &far).is_err());
        let dup = curve(&[(0.1, 24.0), (0.2, 24.0), (0.4, 29.0), (0.8, 31.0)]);
        assert!(bd_rate(&dup, &a).is_err());
        let zero = curve(&[(0.0, 24.0), (0.2, 26.0), (0.4, 29.0), (0.8, 31.0)]);
        assert!(bd_rate(&zero, &a).is_err());
        assert!(RdPoint::new(-1.0, 30.0, "x").is_err());
    }
}
