//! 3x3, stride-1, zero-padded cross-correlation via im2col and GEMM.
//!
//! Layouts are row-major: input `[batch, c_in, h, w]`, kernel
//! `[c_out, c_in, 3, 3]` (read as a `c_out x 9 c_in` matrix), output
//! `[batch, c_out, h, w]`.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvShape {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
}

impl ConvShape {
    fn hw(&self) -> usize {
        self.h * self.w
    }

    fn patch(&self) -> usize {
        self.c_in * 9
    }
}

/// Which operand of a product is stored transposed.
#[derive(Clone, Copy)]
enum Layout {
    Normal,
    Transposed,
}

/// `c = a b + beta c` with `a` m x k and `b` k x n as logical shapes.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    la: Layout,
    b: &[f64],
    lb: Layout,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = match la {
        Layout::Normal => (k as isize, 1),
        Layout::Transposed => (1, m as isize),
    };
    let (rsb, csb) = match lb {
        Layout::Normal => (n as isize, 1),
        Layout::Transposed => (1, k as isize),
    };
    // SAFETY: the asserts above bound every index the strides can reach.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Patch matrix `[9 c_in, h w]` of one image `[c_in, h, w]`.
fn im2col(img: &[f64], s: &ConvShape, cols: &mut [f64]) {
    let (h, w, hw) = (s.h, s.w, s.hw());
    for ci in 0..s.c_in {
        let plane = &img[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(ci * 9 + ky * 3 + kx) * hw..][..hw];
                let dy = ky as isize - 1;
                let dx = kx as isize - 1;
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (w as isize - dx).min(w as isize) as usize;
                for y in 0..h {
                    let dst = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * w..][..w];
                    dst[..x_lo].fill(0.0);
                    dst[x_hi..].fill(0.0);
                    let off = (x_lo as isize + dx) as usize;
                    dst[x_lo..x_hi].copy_from_slice(&src[off..off + (x_hi - x_lo)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`], accumulated into `img`.
fn col2im_add(cols: &[f64], s: &ConvShape, img: &mut [f64]) {
    let (h, w, hw) = (s.h, s.w, s.hw());
    for ci in 0..s.c_in {
        let plane = &mut img[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[(ci * 9 + ky * 3 + kx) * hw..][..hw];
                let dy = ky as isize - 1;
                let dx = kx as isize - 1;
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (w as isize - dx).min(w as isize) as usize;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w + x_lo..y * w + x_hi];
                    let off = sy as usize * w + (x_lo as isize + dx) as usize;
                    for (d, v) in plane[off..off + src.len()].iter_mut().zip(src) {
                        *d += v;
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward(input: &[f64], kernel: &[f64], s: &ConvShape) -> Vec<f64> {
    let (hw, patch) = (s.hw(), s.patch());
    let mut out = vec![0.0; s.batch * s.c_out * hw];
    let mut cols = vec![0.0; patch * hw];
    for b in 0..s.batch {
        im2col(&input[b * s.c_in * hw..(b + 1) * s.c_in * hw], s, &mut cols);
        let dst = &mut out[b * s.c_out * hw..(b + 1) * s.c_out * hw];
        gemm(s.c_out, patch, hw, kernel, Layout::Normal, &cols, Layout::Normal, 0.0, dst);
    }
    out
}

/// Accumulates input and/or kernel gradients for an upstream gradient
/// `grad_out` shaped like the forward output.
pub(crate) fn conv2d_backward(
    input: &[f64],
    kernel: &[f64],
    grad_out: &[f64],
    s: &ConvShape,
    grad_input: Option<&mut [f64]>,
    grad_kernel: Option<&mut [f64]>,
) {
    let (hw, patch) = (s.hw(), s.patch());
    let mut cols = vec![0.0; patch * hw];
    if let Some(gk) = grad_kernel {
        for b in 0..s.batch {
            im2col(&input[b * s.c_in * hw..(b + 1) * s.c_in * hw], s, &mut cols);
            let go = &grad_out[b * s.c_out * hw..(b + 1) * s.c_out * hw];
            // dK += dOut cols^T
            gemm(s.c_out, hw, patch, go, Layout::Normal, &cols, Layout::Transposed, 1.0, gk);
        }
    }
    if let Some(gi) = grad_input {
        for b in 0..s.batch {
            let go = &grad_out[b * s.c_out * hw..(b + 1) * s.c_out * hw];
            // dCols = K^T dOut
            gemm(patch, s.c_out, hw, kernel, Layout::Transposed, go, Layout::Normal, 0.0, &mut cols);
            col2im_add(&cols, s, &mut gi[b * s.c_in * hw..(b + 1) * s.c_in * hw]);
        }
    }
}
