//! Isotropic total variation and its proximal map, computed by fast gradient
//! projection on the dual problem.

use crate::tensor::Image2D;

pub const DEFAULT_TV_INNER_ITERS: usize = 20;

/// Isotropic TV with forward differences; differences across the last
/// row/column are zero (Neumann boundary).
pub fn tv_iso(x: &[f64], h: usize, w: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..h {
        for j in 0..w {
            let v = x[i * w + j];
            let dv = if i + 1 < h { v - x[(i + 1) * w + j] } else { 0.0 };
            let dh = if j + 1 < w { v - x[i * w + j + 1] } else { 0.0 };
            total += (dv * dv + dh * dh).sqrt();
        }
    }
    total
}

/// Dual state of the TV prox. Keeping it between calls warm-starts the next
/// solve, which FISTA-TV does across outer iterations.
#[derive(Clone, Debug)]
pub struct TvProx {
    h: usize,
    w: usize,
    /// Vertical dual field; last row stays zero.
    p: Vec<f64>,
    /// Horizontal dual field; last column stays zero.
    q: Vec<f64>,
}

impl TvProx {
    pub fn new(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            p: vec![0.0; h * w],
            q: vec![0.0; h * w],
        }
    }

    /// `out = v - lambda * div(p, q)`, with `div` the adjoint of the
    /// (negated) forward difference.
    fn primal(&self, v: &[f64], lambda: f64, p: &[f64], q: &[f64], out: &mut [f64]) {
        let (h, w) = (self.h, self.w);
        for i in 0..h {
            for j in 0..w {
                let k = i * w + j;
                let mut l = p[k] + q[k];
                if i > 0 {
                    l -= p[k - w];
                }
                if j > 0 {
                    l -= q[k - 1];
                }
                out[k] = v[k] - lambda * l;
            }
        }
    }

    /// Approximate `argmin_z 0.5 |z - v|^2 + lambda TV(z)`.
    pub fn apply(&mut self, v: &[f64], lambda: f64, inner_iters: usize) -> Vec<f64> {
        if lambda == 0.0 {
            return v.to_vec();
        }
        let (h, w) = (self.h, self.w);
        let n = h * w;
        let step = 1.0 / (8.0 * lambda);
        let mut r = self.p.clone();
        let mut s = self.q.clone();
        let mut z = vec![0.0; n];
        let mut t = 1.0f64;
        for _ in 0..inner_iters.max(1) {
            self.primal(v, lambda, &r, &s, &mut z);
            let p_prev = std::mem::take(&mut self.p);
            let q_prev = std::mem::take(&mut self.q);
            let mut p = vec![0.0; n];
            let mut q = vec![0.0; n];
            for i in 0..h {
                for j in 0..w {
                    let k = i * w + j;
                    let mut a = 0.0;
                    let mut b = 0.0;
                    if i + 1 < h {
                        a = r[k] + step * (z[k] - z[k + w]);
                    }
                    if j + 1 < w {
                        b = s[k] + step * (z[k] - z[k + 1]);
                    }
                    let scale = (a * a + b * b).sqrt().max(1.0);
                    p[k] = a / scale;
                    q[k] = b / scale;
                }
            }
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let beta = (t - 1.0) / t_next;
            for k in 0..n {
                r[k] = p[k] + beta * (p[k] - p_prev[k]);
                s[k] = q[k] + beta * (q[k] - q_prev[k]);
            }
            self.p = p;
            self.q = q;
            t = t_next;
        }
        let mut out = vec![0.0; n];
        self.primal(v, lambda, &self.p, &self.q, &mut out);
        out
    }
}

/// Cold-started TV prox of an image.
pub fn tv_prox(v: &Image2D, lambda_tv: f64, inner_iters: usize) -> Image2D {
    let (h, w) = (v.height(), v.width());
    let out = TvProx::new(h, w).apply(v.as_slice(), lambda_tv.max(0.0), inner_iters);
    Image2D::from_vec(h, w, out).expect("same shape as input")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn image(h: usize, w: usize, rng: &mut Rng) -> Image2D {
        Image2D::from_vec(h, w, (0..h * w).map(|_| rng.uniform(0.0, 1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_lambda_and_constant_images() {
        let mut rng = Rng::new(1);
        let v = image(6, 7, &mut rng);
        assert_eq!(tv_prox(&v, 0.0, 20), v);
        let c = Image2D::from_vec(5, 5, vec![0.3; 25]).unwrap();
        let out = tv_prox(&c, 0.7, 20);
        for (a, b) in out.as_slice().iter().zip(c.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    /// Exact prox of `lambda |z1 - z2|`: the difference shrinks by 2 lambda
    /// or collapses to the mean.
    fn two_point_oracle(a: f64, b: f64, lambda: f64) -> (f64, f64) {
        let d = a - b;
        if d.abs() <= 2.0 * lambda {
            let m = 0.5 * (a + b);
            (m, m)
        } else {
            (a - lambda * d.signum(), b + lambda * d.signum())
        }
    }

    #[test]
    fn two_pixel_closed_form() {
        let mut rng = Rng::new(2);
        for _ in 0..200 {
            let a = rng.uniform(-1.0, 1.0);
            let b = rng.uniform(-1.0, 1.0);
            let lambda = rng.uniform(0.01, 0.8);
            let (ea, eb) = two_point_oracle(a, b, lambda);
            for v in [
                Image2D::from_vec(1, 2, vec![a, b]).unwrap(),
                Image2D::from_vec(2, 1, vec![a, b]).unwrap(),
            ] {
                let out = tv_prox(&v, lambda, 300);
                assert!((out.as_slice()[0] - ea).abs() < 1e-6, "{a} {b} {lambda}");
                assert!((out.as_slice()[1] - eb).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn approaches_exact_prox_objective() {
        // Many inner iterations get the prox objective within 1e-6 of a
        // long run; the default 20 stays close.
        let mut rng = Rng::new(3);
        let v = image(12, 12, &mut rng);
        let lambda = 0.1;
        let obj = |z: &Image2D| {
            let fid: f64 =
                z.as_slice().iter().zip(v.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum();
            0.5 * fid + lambda * tv_iso(z.as_slice(), 12, 12)
        };
        let best = obj(&tv_prox(&v, lambda, 5000));
        assert!(obj(&tv_prox(&v, lambda, 1000)) - best < 1e-6);
        assert!(obj(&tv_prox(&v, lambda, 20)) - best < 1e-2 * best);
        assert!(best < obj(&v));
    }

    #[test]
    fn warm_start_reaches_the_same_point() {
        let mut rng = Rng::new(4);
        let v = image(10, 10, &mut rng);
        let mut warm = TvProx::new(10, 10);
        let mut out = Vec::new();
        for _ in 0..50 {
            out = warm.apply(v.as_slice(), 0.2, 20);
        }
        let exact = tv_prox(&v, 0.2, 20_000);
        let gap = |z: &[f64]| {
            z.iter().zip(exact.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let single = tv_prox(&v, 0.2, 20);
        assert!(gap(&out) < 1e-3);
        assert!(gap(&out) < 0.1 * gap(single.as_slice()));
    }

    proptest! {
        #[test]
        fn prox_does_not_increase_tv(seed in 0u64..1000, lambda in 0.001f64..2.0) {
            let mut rng = Rng::new(seed);
            let v = image(8, 9, &mut rng);
            let out = tv_prox(&v, lambda, DEFAULT_TV_INNER_ITERS);
            prop_assert!(tv_iso(out.as_slice(), 8, 9) <= tv_iso(v.as_slice(), 8, 9) + 1e-12);
        }
    }
}
