//! Forward models `b = A x` with matched adjoints.

mod emt;
mod laplacian;
mod matrix;
mod radon;

use std::sync::Arc;

pub use emt::{condition_number, synth_emt_operator, synth_emt_operator_with, EmtConfig};
pub use laplacian::Laplacian;
pub use matrix::MatrixOperator;
pub use radon::{fbp_reconstruct, radon_adjoint, radon_apply, RadonGeometry, RadonOperator, Sinogram};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A real linear map with an exact transpose.
///
/// `apply_into`/`adjoint_into` work on flat row-major buffers; the provided
/// `apply`/`adjoint` wrappers check element counts and attach the output shape.
pub trait LinearOperator: Send + Sync {
    fn in_dims(&self) -> &[usize];
    fn out_dims(&self) -> &[usize];

    fn apply_into(&self, x: &[f64], out: &mut [f64]);
    fn adjoint_into(&self, y: &[f64], out: &mut [f64]);

    fn in_len(&self) -> usize {
        self.in_dims().iter().product()
    }

    fn out_len(&self) -> usize {
        self.out_dims().iter().product()
    }

    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        if x.len() != self.in_len() {
            return Err(Error::ShapeMismatch {
                expected: self.in_dims().to_vec(),
                actual: x.dims().to_vec(),
            });
        }
        let mut out = vec![0.0; self.out_len()];
        self.apply_into(x.as_slice(), &mut out);
        Tensor::from_vec(self.out_dims(), out)
    }

    fn adjoint(&self, y: &Tensor) -> Result<Tensor> {
        if y.len() != self.out_len() {
            return Err(Error::ShapeMismatch {
                expected: self.out_dims().to_vec(),
                actual: y.dims().to_vec(),
            });
        }
        let mut out = vec![0.0; self.in_len()];
        self.adjoint_into(y.as_slice(), &mut out);
        Tensor::from_vec(self.in_dims(), out)
    }
}

pub type SharedOperator = Arc<dyn LinearOperator>;

/// `A^T A x`.
pub fn normal_apply(op: &dyn LinearOperator, x: &[f64]) -> Vec<f64> {
    let mut ax = vec![0.0; op.out_len()];
    op.apply_into(x, &mut ax);
    let mut out = vec![0.0; op.in_len()];
    op.adjoint_into(&ax, &mut out);
    out
}

/// The operator as an explicit `[out_len, in_len]` matrix, one column per
/// unit input.
pub fn dense_matrix(op: &dyn LinearOperator) -> Result<Tensor> {
    let (m, n) = (op.out_len(), op.in_len());
    let mut data = vec![0.0; m * n];
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; m];
    for j in 0..n {
        e[j] = 1.0;
        op.apply_into(&e, &mut col);
        e[j] = 0.0;
        for (i, v) in col.iter().enumerate() {
            data[i * n + j] = *v;
        }
    }
    Tensor::from_vec(&[m, n], data)
}


#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use crate::rng::Rng;
    use crate::tensor::dot;

    /// Relative dot-product test error `|<Ax,y> - <x,A^T y>| / (|Ax||y| + |x||A^T y|)`.
    pub fn adjoint_mismatch(op: &dyn LinearOperator, rng: &mut Rng) -> f64 {
        let x: Vec<f64> = (0..op.in_len()).map(|_| rng.normal()).collect();
        let y: Vec<f64> = (0..op.out_len()).map(|_| rng.normal()).collect();
        let mut ax = vec![0.0; op.out_len()];
        op.apply_into(&x, &mut ax);
        let mut aty = vec![0.0; op.in_len()];
        op.adjoint_into(&y, &mut aty);
        let lhs = dot(&ax, &y);
        let rhs = dot(&x, &aty);
        let n = |v: &[f64]| dot(v, v).sqrt();
        (lhs - rhs).abs() / (n(&ax) * n(&y) + n(&x) * n(&aty))
    }

    pub fn linearity_mismatch(op: &dyn LinearOperator, rng: &mut Rng) -> f64 {
        let a = rng.normal();
        let b = rng.normal();
        let x: Vec<f64> = (0..op.in_len()).map(|_| rng.normal()).collect();
        let z: Vec<f64> = (0..op.in_len()).map(|_| rng.normal()).collect();
        let comb: Vec<f64> = x.iter().zip(&z).map(|(xi, zi)| a * xi + b * zi).collect();
        let run = |v: &[f64]| {
            let mut o = vec![0.0; op.out_len()];
            op.apply_into(v, &mut o);
            o
        };
        let (ac, ax, az) = (run(&comb), run(&x), run(&z));
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..ac.len() {
            let rhs = a * ax[i] + b * az[i];
            num += (ac[i] - rhs).powi(2);
            den += (a * ax[i]).powi(2) + (b * az[i]).powi(2);
        }
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }
}
