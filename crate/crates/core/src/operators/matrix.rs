use crate::error::{invalid, Result};
use crate::operators::LinearOperator;
use crate::tensor::{dot_fast, Tensor};

/// Dense `M x N` matrix acting on vectors (or images) of `N` elements.
#[derive(Clone, Debug)]
pub struct MatrixOperator {
    matrix: Tensor,
    rows: usize,
    cols: usize,
    in_dims: Vec<usize>,
    out_dims: Vec<usize>,
}

impl MatrixOperator {
    pub fn new(matrix: Tensor) -> Result<Self> {
        let (rows, cols) = match matrix.dims() {
            [r, c] => (*r, *c),
            d => return Err(invalid(format!("matrix operator needs a 2-D tensor, got {d:?}"))),
        };
        matrix.check_finite("matrix operator")?;
        Ok(Self {
            matrix,
            rows,
            cols,
            in_dims: vec![cols],
            out_dims: vec![rows],
        })
    }

    /// Treat the input as a tensor of shape `dims` (e.g. `[H, W]` for images).
    pub fn with_input_dims(mut self, dims: &[usize]) -> Result<Self> {
        if dims.iter().product::<usize>() != self.cols {
            return Err(invalid(format!(
                "input shape {dims:?} does not have {} elements",
                self.cols
            )));
        }
        self.in_dims = dims.to_vec();
        Ok(self)
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Tensor::zeros(&[n, n])?;
        for i in 0..n {
            m.as_mut_slice()[i * n + i] = 1.0;
        }
        Self::new(m)
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix.as_slice()[i * self.cols..(i + 1) * self.cols]
    }
}

impl LinearOperator for MatrixOperator {
    fn in_dims(&self) -> &[usize] {
        &self.in_dims
    }

    fn out_dims(&self) -> &[usize] {
        &self.out_dims
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot_fast(self.row(i), x);
        }
    }

    fn adjoint_into(&self, y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * yi;
            }
        }
    }
}
