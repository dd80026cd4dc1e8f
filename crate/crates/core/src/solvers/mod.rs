//! Model-based reconstruction: proximal operators, ISTA, FISTA, FISTA-TV and
//! the Laplacian-regularised warm start.

mod fista;
mod lapinit;
mod power;
mod prox;
mod tv;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub use fista::{fista_solve, fista_t_next, fista_tv_solve, ista_solve};
pub use lapinit::{conjugate_gradient, laplacian_init, CgReport, DEFAULT_LAMBDA0};
pub use power::{default_lipschitz, power_iteration_l, rayleigh_sequence, LIPSCHITZ_SAFETY};
pub use prox::{hard, hard_threshold, soft, soft_threshold};
pub use tv::{tv_iso, tv_prox, TvProx, DEFAULT_TV_INNER_ITERS};

pub(crate) use prox::soft_in_place;

use crate::error::{invalid, Error, Result};
use crate::operators::LinearOperator;
use crate::tensor::{Image2D, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSize {
    /// `1 / L` with `L` from [`default_lipschitz`].
    Auto,
    Fixed(f64),
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub step_size: StepSize,
    pub reg_lambda: f64,
    /// Stop once `|x_{k+1} - x_k| / max(|x_k|, 1e-12) < tol`.
    pub tol: f64,
    pub record_trace: bool,
    /// Keep an image snapshot every this many iterations (0 disables).
    pub snapshot_every: usize,
    /// Inner dual iterations of the TV proximal step.
    pub tv_inner_iters: usize,
    /// FISTA momentum; when off, FISTA reduces to ISTA exactly.
    pub extrapolate: bool,
    pub warm_start: Option<Tensor>,
    /// Ground truth for the RMSE column of the trace.
    pub reference: Option<Tensor>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            step_size: StepSize::Auto,
            reg_lambda: 0.001,
            tol: 1e-10,
            record_trace: true,
            snapshot_every: 0,
            tv_inner_iters: DEFAULT_TV_INNER_ITERS,
            extrapolate: true,
            warm_start: None,
            reference: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be >= 1"));
        }
        if let StepSize::Fixed(mu) = self.step_size {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(invalid(format!("step size must be > 0, got {mu}")));
            }
        }
        if !(self.reg_lambda >= 0.0 && self.reg_lambda.is_finite()) {
            return Err(invalid(format!("reg_lambda must be >= 0, got {}", self.reg_lambda)));
        }
        if !(self.tol >= 0.0) {
            return Err(invalid(format!("tol must be >= 0, got {}", self.tol)));
        }
        if self.tv_inner_iters == 0 {
            return Err(invalid("tv_inner_iters must be >= 1"));
        }
        Ok(())
    }

    pub(crate) fn step(&self, op: &dyn LinearOperator) -> f64 {
        match self.step_size {
            StepSize::Fixed(mu) => mu,
            StepSize::Auto => 1.0 / default_lipschitz(op),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolverTrace {
    pub objective: Vec<f64>,
    /// Empty when no reference was supplied.
    pub rmse: Vec<f64>,
    pub snapshots: Vec<(usize, Image2D)>,
}

impl SolverTrace {
    pub fn len(&self) -> usize {
        self.objective.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objective.is_empty()
    }

    /// `iteration,objective,rmse`, iterations counted from 1. The rmse
    /// column is left empty without a reference.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,objective,rmse\n");
        for (k, f) in self.objective.iter().enumerate() {
            match self.rmse.get(k) {
                Some(r) => writeln!(out, "{},{f},{r}", k + 1),
                None => writeln!(out, "{},{f},", k + 1),
            }
            .unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// `y - mu A^T (A y - b)`.
pub fn gradient_step(op: &dyn LinearOperator, b: &[f64], y: &[f64], mu: f64) -> Vec<f64> {
    let mut r = vec![0.0; op.out_len()];
    op.apply_into(y, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri -= bi;
    }
    let mut g = vec![0.0; op.in_len()];
    op.adjoint_into(&r, &mut g);
    y.iter().zip(&g).map(|(yi, gi)| yi - mu * gi).collect()
}

/// `0.5 |A x - b|^2`.
pub fn data_fidelity(op: &dyn LinearOperator, b: &[f64], x: &[f64]) -> f64 {
    let mut r = vec![0.0; op.out_len()];
    op.apply_into(x, &mut r);
    0.5 * r.iter().zip(b).map(|(ri, bi)| (ri - bi) * (ri - bi)).sum::<f64>()
}

pub fn rmse_slices(a: &[f64], b: &[f64]) -> f64 {
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (s / a.len() as f64).sqrt()
}

/// Image layout of an operator's input: 2-D inputs keep their shape and
/// 1-D inputs become a single row.
pub(crate) fn image_dims(op: &dyn LinearOperator) -> Result<(usize, usize)> {
    match op.in_dims() {
        [h, w] => Ok((*h, *w)),
        [n] => Ok((1, *n)),
        [1, h, w] | [1, 1, h, w] => Ok((*h, *w)),
        d => Err(invalid(format!("operator input {d:?} is not an image"))),
    }
}

pub(crate) fn check_measurement(op: &dyn LinearOperator, b: &Tensor) -> Result<()> {
    if b.len() != op.out_len() {
        return Err(Error::ShapeMismatch {
            expected: op.out_dims().to_vec(),
            actual: b.dims().to_vec(),
        });
    }
    Ok(())
}
