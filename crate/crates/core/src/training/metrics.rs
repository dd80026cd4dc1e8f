//! Image quality measures.

use crate::error::{invalid, Error, Result};
use crate::tensor::Image2D;

/// PSNR reported for an exact reconstruction.
pub const PSNR_CAP_DB: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// Quality of one reconstruction, or the mean over a set.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricsRow {
    pub rmse: f64,
    pub psnr: f64,
    pub ssim: f64,
}

fn check_pair(x: &Image2D, r: &Image2D) -> Result<()> {
    if (x.height(), x.width()) != (r.height(), r.width()) {
        return Err(Error::ShapeMismatch {
            expected: vec![r.height(), r.width()],
            actual: vec![x.height(), x.width()],
        });
    }
    Ok(())
}

fn check_peak(peak: f64) -> Result<()> {
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(invalid(format!("peak must be > 0, got {peak}")));
    }
    Ok(())
}

pub fn rmse(x: &Image2D, reference: &Image2D) -> Result<f64> {
    check_pair(x, reference)?;
    let n = x.as_slice().len() as f64;
    let sq: f64 = x.as_slice().iter().zip(reference.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sq / n).sqrt())
}

/// `20 log10(peak / rmse)`, capped at [`PSNR_CAP_DB`].
pub fn psnr(x: &Image2D, reference: &Image2D, peak: f64) -> Result<f64> {
    check_peak(peak)?;
    let e = rmse(x, reference)?;
    if e == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((20.0 * (peak / e).log10()).min(PSNR_CAP_DB))
}

/// Normalised 1-D Gaussian taps.
pub fn gaussian_taps(len: usize, sigma: f64) -> Vec<f64> {
    let c = (len as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..len).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable valid-mode filtering of a row-major `h x w` buffer.
fn filter_valid(src: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean local SSIM over every full 11x11 Gaussian window, with dynamic
/// range `peak`.
pub fn ssim(x: &Image2D, reference: &Image2D, peak: f64) -> Result<f64> {
    check_pair(x, reference)?;
    check_peak(peak)?;
    let (h, w) = (x.height(), x.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(invalid(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}")));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let (a, b) = (x.as_slice(), reference.as_slice());
    let prod = |f: &dyn Fn(f64, f64) -> f64| a.iter().zip(b).map(|(p, q)| f(*p, *q)).collect::<Vec<_>>();
    let mx = filter_valid(a, h, w, &taps);
    let my = filter_valid(b, h, w, &taps);
    let mxx = filter_valid(&prod(&|p, _| p * p), h, w, &taps);
    let myy = filter_valid(&prod(&|_, q| q * q), h, w, &taps);
    let mxy = filter_valid(&prod(&|p, q| p * q), h, w, &taps);
    let c1 = (K1 * peak).powi(2);
    let c2 = (K2 * peak).powi(2);
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = mxx[i] - ux * ux;
            let vy = myy[i] - uy * uy;
            let cxy = mxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / mx.len() as f64)
}

pub fn metrics(x: &Image2D, reference: &Image2D, peak: f64) -> Result<MetricsRow> {
    Ok(MetricsRow {
        rmse: rmse(x, reference)?,
        psnr: psnr(x, reference, peak)?,
        ssim: ssim(x, reference, peak)?,
    })
}
