//! Layer-independent gradient matrix for the unrolled network.
//!
//! For a forward matrix `A` (`N` measurements by `M` pixels) the weight
//! matrix `W` has the same shape and minimises `|W^T A|_F^2` subject to
//! `w_m^T a_m = 1` for every column. The objective separates by column, so
//! with `G = A A^T + eps I` each column is `G^-1 a_m / (a_m^T G^-1 a_m)`.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightMode {
    /// Closed-form minimiser of the column-wise quadratic program.
    Analytic,
    /// `W = A`: the plain transpose gradient with learned step sizes.
    Physical,
}

#[derive(Clone, Debug)]
pub struct WeightSolveReport {
    /// `[N, M]`, same shape as `A`.
    pub weights: Tensor,
    /// `|w_m^T a_m - 1|` per column.
    pub constraint_residuals: Vec<f64>,
    /// `|W^T A|_F^2`.
    pub objective: f64,
    /// Largest `|2 G w_m - nu_m a_m|` over columns.
    pub kkt_residual: f64,
    pub ridge_eps: f64,
}

impl WeightSolveReport {
    pub fn max_constraint_residual(&self) -> f64 {
        self.constraint_residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let dims = self.weights.dims();
        writeln!(s, "rows={}", dims[0]).unwrap();
        writeln!(s, "cols={}", dims[1]).unwrap();
        writeln!(s, "ridge_eps={:e}", self.ridge_eps).unwrap();
        writeln!(s, "objective={:e}", self.objective).unwrap();
        writeln!(s, "max_constraint_residual={:e}", self.max_constraint_residual()).unwrap();
        writeln!(s, "kkt_residual={:e}", self.kkt_residual).unwrap();
        s
    }
}

fn matrix_dims(t: &Tensor) -> Result<(usize, usize)> {
    match t.dims() {
        [r, c] => Ok((*r, *c)),
        d => Err(Error::InvalidArgument(format!("expected a matrix, got shape {d:?}"))),
    }
}

fn to_dmatrix(t: &Tensor) -> Result<DMatrix<f64>> {
    let (r, c) = matrix_dims(t)?;
    Ok(DMatrix::from_row_slice(r, c, t.as_slice()))
}

fn to_tensor(m: &DMatrix<f64>) -> Result<Tensor> {
    let mut data = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            data.push(m[(i, j)]);
        }
    }
    Tensor::from_vec(&[m.nrows(), m.ncols()], data)
}

fn check_columns(a: &DMatrix<f64>) -> Result<()> {
    match (0..a.ncols()).find(|&j| a.column(j).iter().all(|&v| v == 0.0)) {
        Some(j) => Err(Error::ZeroColumn(j)),
        None => Ok(()),
    }
}

/// `1e-8 trace(A A^T) / N`.
pub fn default_ridge(a: &Tensor) -> f64 {
    let n = a.dims().first().copied().unwrap_or(1).max(1);
    1e-8 * a.dot(a).unwrap_or(0.0) / n as f64
}

/// Closed-form weights. `ridge_eps = None` selects [`default_ridge`].
pub fn solve_analytic_w(a: &Tensor, ridge_eps: Option<f64>) -> Result<WeightSolveReport> {
    let am = to_dmatrix(a)?;
    check_columns(&am)?;
    let eps = ridge_eps.unwrap_or_else(|| default_ridge(a));
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("ridge_eps must be >= 0, got {eps}")));
    }
    let n = am.nrows();
    let g = &am * am.transpose() + DMatrix::<f64>::identity(n, n) * eps;
    let chol = g
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("A A^T + eps I is not positive definite".into()))?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &d| (l.min(d), h.max(d)));
    if lo * lo < 1e-14 * hi * hi {
        return Err(Error::Singular(format!(
            "A A^T + eps I is numerically singular (pivot ratio {:e})",
            (lo / hi).powi(2)
        )));
    }

    let ginv_a = chol.solve(&am);
    let mut w = ginv_a.clone();
    let mut kkt: f64 = 0.0;
    for m in 0..am.ncols() {
        let denom = am.column(m).dot(&ginv_a.column(m));
        w.column_mut(m).scale_mut(1.0 / denom);
        let nu = 2.0 / denom;
        let r = (&g * w.column(m)) * 2.0 - am.column(m) * nu;
        kkt = kkt.max(r.norm());
    }
    let constraint_residuals =
        (0..am.ncols()).map(|m| (w.column(m).dot(&am.column(m)) - 1.0).abs()).collect();
    let objective = (w.transpose() * &am).norm_squared();
    Ok(WeightSolveReport {
        weights: to_tensor(&w)?,
        constraint_residuals,
        objective,
        kkt_residual: kkt,
        ridge_eps: eps,
    })
}

/// `W = A`.
pub fn physical_weights(a: &Tensor) -> Result<Tensor> {
    matrix_dims(a)?;
    Ok(a.clone())
}

/// `|W2 - (I - W1 A)|_F`.
pub fn check_lista_condition(w1: &Tensor, w2: &Tensor, a: &Tensor) -> Result<f64> {
    let (w1m, w2m, am) = (to_dmatrix(w1)?, to_dmatrix(w2)?, to_dmatrix(a)?);
    if w1m.ncols() != am.nrows() || w2m.nrows() != w1m.nrows() || w2m.ncols() != am.ncols() {
        return Err(Error::ShapeMismatch {
            expected: vec![w1m.nrows(), am.ncols()],
            actual: w2.dims().to_vec(),
        });
    }
    let eye = DMatrix::<f64>::identity(w2m.nrows(), w2m.ncols());
    Ok((w2m - (eye - w1m * am)).norm())
}

/// Implied LISTA pair of one gradient layer with step `mu`:
/// `W1 = mu W^T`, `W2 = I - W1 A`.
pub fn lista_pair(w: &Tensor, a: &Tensor, mu: f64) -> Result<(Tensor, Tensor)> {
    let (wm, am) = (to_dmatrix(w)?, to_dmatrix(a)?);
    if wm.shape() != am.shape() {
        return Err(Error::ShapeMismatch {
            expected: a.dims().to_vec(),
            actual: w.dims().to_vec(),
        });
    }
    let w1 = wm.transpose() * mu;
    let w2 = DMatrix::<f64>::identity(am.ncols(), am.ncols()) - &w1 * am;
    Ok((to_tensor(&w1)?, to_tensor(&w2)?))
}

/// `max_{m != n} |w_m^T a_n| / (|w_m| |a_n|)` over columns.
pub fn coherence_report(w: &Tensor, a: &Tensor) -> Result<f64> {
    let (wm, am) = (to_dmatrix(w)?, to_dmatrix(a)?);
    if wm.shape() != am.shape() {
        return Err(Error::ShapeMismatch {
            expected: a.dims().to_vec(),
            actual: w.dims().to_vec(),
        });
    }
    check_columns(&wm)?;
    check_columns(&am)?;
    let wn: Vec<f64> = (0..wm.ncols()).map(|j| wm.column(j).norm()).collect();
    let an: Vec<f64> = (0..am.ncols()).map(|j| am.column(j).norm()).collect();
    let cross = wm.transpose() * &am;
    let mut worst: f64 = 0.0;
    for m in 0..wm.ncols() {
        for n in 0..am.ncols() {
            if m != n {
                worst = worst.max(cross[(m, n)].abs() / (wn[m] * an[n]));
            }
        }
    }
    Ok(worst)
}
