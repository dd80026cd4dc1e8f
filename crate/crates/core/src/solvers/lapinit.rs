use crate::error::{invalid, Error, Result};
use crate::operators::{Laplacian, LinearOperator};
use crate::tensor::{dot, Image2D, Tensor};

use super::{check_measurement, image_dims};

pub const DEFAULT_LAMBDA0: f64 = 0.001;
const CG_TOL: f64 = 1e-8;
const CG_MAX_ITERS: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    /// `|M x - rhs| / |rhs|`, recomputed from scratch at exit.
    pub relative_residual: f64,
}

/// Conjugate gradient for a symmetric positive (semi)definite `apply`,
/// started from zero. The recursive residual is re-checked against the true
/// one and CG restarts if they disagree.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    rhs: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, CgReport)> {
    let n = rhs.len();
    let rhs_norm = dot(rhs, rhs).sqrt();
    let mut x = vec![0.0; n];
    if rhs_norm == 0.0 {
        return Ok((
            x,
            CgReport {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let true_residual = |x: &[f64]| -> Vec<f64> {
        let mx = apply(x);
        rhs.iter().zip(&mx).map(|(b, m)| b - m).collect()
    };

    let mut iterations = 0;
    let mut r = rhs.to_vec();
    loop {
        let mut p = r.clone();
        let mut rr = dot(&r, &r);
        while iterations < max_iters && rr.sqrt() > tol * rhs_norm {
            let mp = apply(&p);
            let pmp = dot(&p, &mp);
            if pmp <= 0.0 {
                break;
            }
            let alpha = rr / pmp;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * mp[i];
            }
            let rr_next = dot(&r, &r);
            let beta = rr_next / rr;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
            rr = rr_next;
            iterations += 1;
        }
        r = true_residual(&x);
        let rel = dot(&r, &r).sqrt() / rhs_norm;
        if rel <= tol {
            return Ok((
                x,
                CgReport {
                    iterations,
                    relative_residual: rel,
                },
            ));
        }
        if iterations >= max_iters || rr.sqrt() > tol * rhs_norm {
            return Err(Error::CgNotConverged {
                residual: rel,
                iterations,
            });
        }
    }
}

/// Solves `(A^T A + lambda0 L^T L) x = A^T b` with `L` the Neumann
/// Laplacian on the image grid.
pub fn laplacian_init(op: &dyn LinearOperator, b: &Tensor, lambda0: f64) -> Result<Image2D> {
    laplacian_init_report(op, b, lambda0).map(|(x, _)| x)
}

pub fn laplacian_init_report(
    op: &dyn LinearOperator,
    b: &Tensor,
    lambda0: f64,
) -> Result<(Image2D, CgReport)> {
    check_measurement(op, b)?;
    if !(lambda0 >= 0.0 && lambda0.is_finite()) {
        return Err(invalid(format!("lambda0 must be >= 0, got {lambda0}")));
    }
    let (h, w) = image_dims(op)?;
    let lap = if lambda0 > 0.0 { Some(Laplacian::new(h, w)?) } else { None };
    let mut rhs = vec![0.0; op.in_len()];
    op.adjoint_into(b.as_slice(), &mut rhs);

    let apply = |x: &[f64]| -> Vec<f64> {
        let mut ax = vec![0.0; op.out_len()];
        op.apply_into(x, &mut ax);
        let mut out = vec![0.0; x.len()];
        op.adjoint_into(&ax, &mut out);
        if let Some(lap) = &lap {
            let mut lx = vec![0.0; x.len()];
            let mut llx = vec![0.0; x.len()];
            lap.apply_into(x, &mut lx);
            lap.apply_into(&lx, &mut llx);
            for (o, v) in out.iter_mut().zip(&llx) {
                *o += lambda0 * v;
            }
        }
        out
    };
    let (x, report) = conjugate_gradient(apply, &rhs, CG_TOL, CG_MAX_ITERS)?;
    Ok((Image2D::from_vec(h, w, x)?, report))
}
