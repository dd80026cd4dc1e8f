use crate::error::{invalid, Result};
use crate::operators::LinearOperator;

/// 5-point grid Laplacian with mirrored (Neumann) boundaries.
///
/// `(Lx)_p = sum over in-grid neighbours q of (x_p - x_q)`; mirrored
/// neighbours contribute zero difference. Symmetric, PSD, singular on
/// constants only.
#[derive(Clone, Debug)]
pub struct Laplacian {
    dims: [usize; 2],
}

impl Laplacian {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height < 2 || width < 2 {
            return Err(invalid(format!(
                "laplacian needs at least a 2x2 grid, got {height}x{width}"
            )));
        }
        Ok(Self {
            dims: [height, width],
        })
    }
}

impl LinearOperator for Laplacian {
    fn in_dims(&self) -> &[usize] {
        &self.dims
    }

    fn out_dims(&self) -> &[usize] {
        &self.dims
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let [h, w] = self.dims;
        for i in 0..h {
            for j in 0..w {
                let p = i * w + j;
                let v = x[p];
                let mut acc = 0.0;
                if i > 0 {
                    acc += v - x[p - w];
                }
                if i + 1 < h {
                    acc += v - x[p + w];
                }
                if j > 0 {
                    acc += v - x[p - 1];
                }
                if j + 1 < w {
                    acc += v - x[p + 1];
                }
                out[p] = acc;
            }
        }
    }

    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        self.apply_into(y, out);
    }
}
