use crate::error::Result;
use crate::operators::LinearOperator;
use crate::tensor::{dot, Image2D, Tensor};

use super::{
    check_measurement, data_fidelity, gradient_step, image_dims, rmse_slices, soft_in_place,
    tv_iso, SolverConfig, SolverTrace, TvProx,
};

/// `(1 + sqrt(1 + 4 t^2)) / 2`.
pub fn fista_t_next(t: f64) -> f64 {
    (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0
}

fn l1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

fn relative_change(new: &[f64], old: &[f64]) -> f64 {
    let diff: f64 = new.iter().zip(old).map(|(a, b)| (a - b) * (a - b)).sum();
    diff.sqrt() / dot(old, old).sqrt().max(1e-12)
}

/// Proximal-gradient loop shared by ISTA, FISTA and FISTA-TV. `prox`
/// receives the gradient-step output and the step size.
fn proximal_gradient(
    op: &dyn LinearOperator,
    b: &Tensor,
    cfg: &SolverConfig,
    accelerate: bool,
    prox: &mut dyn FnMut(&mut Vec<f64>, f64),
    regulariser: &dyn Fn(&[f64]) -> f64,
) -> Result<(Image2D, SolverTrace)> {
    cfg.validate()?;
    check_measurement(op, b)?;
    let (h, w) = image_dims(op)?;
    let n = op.in_len();
    let mut x = match &cfg.warm_start {
        Some(x0) => {
            if x0.len() != n {
                return Err(crate::Error::ShapeMismatch {
                    expected: op.in_dims().to_vec(),
                    actual: x0.dims().to_vec(),
                });
            }
            x0.as_slice().to_vec()
        }
        None => vec![0.0; n],
    };
    if let Some(r) = &cfg.reference {
        if r.len() != n {
            return Err(crate::Error::ShapeMismatch {
                expected: op.in_dims().to_vec(),
                actual: r.dims().to_vec(),
            });
        }
    }
    let mu = cfg.step(op);
    let bs = b.as_slice();

    let mut y = x.clone();
    let mut t = 1.0;
    let mut trace = SolverTrace::default();
    for k in 1..=cfg.max_iters {
        let mut x_new = gradient_step(op, bs, &y, mu);
        prox(&mut x_new, mu);

        if cfg.record_trace {
            trace
                .objective
                .push(data_fidelity(op, bs, &x_new) + cfg.reg_lambda * regulariser(&x_new));
            if let Some(r) = &cfg.reference {
                trace.rmse.push(rmse_slices(&x_new, r.as_slice()));
            }
            if cfg.snapshot_every > 0 && k % cfg.snapshot_every == 0 {
                trace.snapshots.push((k, Image2D::from_vec(h, w, x_new.clone())?));
            }
        }

        let change = relative_change(&x_new, &x);
        if accelerate && cfg.extrapolate {
            let t_next = fista_t_next(t);
            let beta = (t - 1.0) / t_next;
            y = x_new.iter().zip(&x).map(|(xn, xo)| xn + beta * (xn - xo)).collect();
            t = t_next;
        } else {
            y.copy_from_slice(&x_new);
        }
        x = x_new;
        if change < cfg.tol {
            break;
        }
    }
    Ok((Image2D::from_vec(h, w, x)?, trace))
}

/// ISTA for `0.5 |Ax - b|^2 + lambda |x|_1`.
pub fn ista_solve(
    op: &dyn LinearOperator,
    b: &Tensor,
    cfg: &SolverConfig,
) -> Result<(Image2D, SolverTrace)> {
    let lambda = cfg.reg_lambda;
    proximal_gradient(op, b, cfg, false, &mut |z, mu| soft_in_place(z, mu * lambda), &l1)
}

/// FISTA for the same objective as [`ista_solve`]; `t_1 = 1`, `y_1 = x_0`.
pub fn fista_solve(
    op: &dyn LinearOperator,
    b: &Tensor,
    cfg: &SolverConfig,
) -> Result<(Image2D, SolverTrace)> {
    let lambda = cfg.reg_lambda;
    proximal_gradient(op, b, cfg, true, &mut |z, mu| soft_in_place(z, mu * lambda), &l1)
}

/// FISTA with an isotropic-TV proximal step. The dual field of the TV prox
/// is carried over between outer iterations.
pub fn fista_tv_solve(
    op: &dyn LinearOperator,
    b: &Tensor,
    cfg: &SolverConfig,
) -> Result<(Image2D, SolverTrace)> {
    let (h, w) = image_dims(op)?;
    let lambda = cfg.reg_lambda;
    let inner = cfg.tv_inner_iters;
    let mut tv = TvProx::new(h, w);
    let mut prox = |z: &mut Vec<f64>, mu: f64| {
        *z = tv.apply(z, mu * lambda, inner);
    };
    proximal_gradient(op, b, cfg, true, &mut prox, &|x| tv_iso(x, h, w))
}
