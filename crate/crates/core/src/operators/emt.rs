//! Synthetic linearised EMT sensitivity operator.
//!
//! Coils sit evenly on the boundary of the inscribed sensing disc. Each
//! measurement pairs an excitation coil with a detection coil; its row is a
//! sum of Gaussian blobs placed along the segment between the two coils
//! (a single blob near the coil when they coincide). The singular spectrum
//! is then warped to the requested condition number and the matrix scaled
//! to unit spectral norm.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::operators::MatrixOperator;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct EmtConfig {
    pub n_coils: usize,
    /// Blobs per coil-pair segment.
    pub blobs_per_pair: usize,
    /// Blob width range as a fraction of the image side.
    pub width_range: (f64, f64),
}

impl Default for EmtConfig {
    fn default() -> Self {
        Self {
            n_coils: 8,
            blobs_per_pair: 5,
            width_range: (0.08, 0.2),
        }
    }
}

pub fn synth_emt_operator(
    rng: &mut Rng,
    n_meas: usize,
    image_size: usize,
    target_condition: f64,
) -> Result<MatrixOperator> {
    synth_emt_operator_with(rng, n_meas, image_size, target_condition, &EmtConfig::default())
}

pub fn synth_emt_operator_with(
    rng: &mut Rng,
    n_meas: usize,
    image_size: usize,
    target_condition: f64,
    cfg: &EmtConfig,
) -> Result<MatrixOperator> {
    let n_pix = image_size * image_size;
    if n_meas == 0 || n_meas >= n_pix {
        return Err(invalid(format!(
            "need 0 < n_meas < image_size^2, got {n_meas} for {image_size}x{image_size}"
        )));
    }
    if !(target_condition >= 1.0) {
        return Err(invalid("target condition number must be at least 1"));
    }
    if cfg.n_coils < 2 {
        return Err(invalid("need at least two coils"));
    }

    let size = image_size as f64;
    let centre = (size - 1.0) / 2.0;
    let radius = size / 2.0;
    let coils: Vec<(f64, f64)> = (0..cfg.n_coils)
        .map(|c| {
            let a = 2.0 * PI * c as f64 / cfg.n_coils as f64;
            (centre + radius * a.cos(), centre + radius * a.sin())
        })
        .collect();

    let mut rows = DMatrix::<f64>::zeros(n_meas, n_pix);
    let pairs = cfg.n_coils * cfg.n_coils;
    for m in 0..n_meas {
        let pair = m % pairs;
        let (e, d) = (pair / cfg.n_coils, pair % cfg.n_coils);
        let (p0, p1) = (coils[e], coils[d]);
        for b in 0..cfg.blobs_per_pair {
            let t = if e == d {
                0.0
            } else if cfg.blobs_per_pair == 1 {
                0.5
            } else {
                b as f64 / (cfg.blobs_per_pair - 1) as f64
            };
            // Pull blobs slightly inwards so they overlap the sensing region.
            let jitter = rng.uniform(-0.05, 0.05) * size;
            let mut cx = p0.0 + t * (p1.0 - p0.0);
            let mut cy = p0.1 + t * (p1.1 - p0.1);
            cx += (centre - cx) * 0.15 + jitter;
            cy += (centre - cy) * 0.15 + rng.uniform(-0.05, 0.05) * size;
            let width = rng.uniform(cfg.width_range.0, cfg.width_range.1) * size;
            let amp = rng.uniform(0.5, 1.5);
            let inv = 1.0 / (2.0 * width * width);
            for i in 0..image_size {
                for j in 0..image_size {
                    let d2 = (i as f64 - cy).powi(2) + (j as f64 - cx).powi(2);
                    rows[(m, i * image_size + j)] += amp * (-d2 * inv).exp();
                }
            }
        }
    }

    let svd = rows.svd(true, true);
    let sigma = svd.singular_values.clone();
    let s_max = sigma.max();
    if !(s_max > 0.0) {
        return Err(Error::InfeasibleConditioning {
            target: target_condition,
            achieved: f64::INFINITY,
        });
    }
    let floor = s_max * 1e-12;
    let s_min = sigma.iter().copied().filter(|&s| s > floor).fold(f64::INFINITY, f64::min);
    let current = s_max / s_min;
    // sigma -> s_max (sigma / s_max)^gamma maps the ratio to current^gamma.
    let gamma = if current > 1.0 + 1e-12 {
        target_condition.ln() / current.ln()
    } else if target_condition <= 2.0 {
        0.0
    } else {
        return Err(Error::InfeasibleConditioning {
            target: target_condition,
            achieved: current,
        });
    };
    let warped = sigma.map(|s| {
        if s > floor {
            (s / s_max).powf(gamma)
        } else {
            0.0
        }
    });
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let warped_matrix = u * DMatrix::from_diagonal(&warped) * v_t;

    let mut data = Vec::with_capacity(n_meas * n_pix);
    for m in 0..n_meas {
        for p in 0..n_pix {
            data.push(warped_matrix[(m, p)]);
        }
    }
    let op = MatrixOperator::new(Tensor::from_vec(&[n_meas, n_pix], data)?)?;
    op.with_input_dims(&[image_size, image_size])
}

/// Ratio of largest to smallest nonzero singular value of a dense matrix.
pub fn condition_number(matrix: &Tensor) -> Result<f64> {
    let (r, c) = match matrix.dims() {
        [r, c] => (*r, *c),
        d => return Err(invalid(format!("need a matrix, got {d:?}"))),
    };
    let m = DMatrix::from_row_slice(r, c, matrix.as_slice());
    let s = m.singular_values();
    let max = s.max();
    let min = s.iter().copied().filter(|&v| v > max * 1e-12).fold(f64::INFINITY, f64::min);
    Ok(max / min)
}
