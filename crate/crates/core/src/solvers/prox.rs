use crate::error::{invalid, Result};
use crate::tensor::Tensor;

/// `sign(x) max(|x| - alpha, 0)`.
#[inline]
pub fn soft(x: f64, alpha: f64) -> f64 {
    let m = x.abs() - alpha;
    if m > 0.0 {
        m.copysign(x)
    } else {
        0.0
    }
}

/// `x 1{|x| >= alpha}`.
#[inline]
pub fn hard(x: f64, alpha: f64) -> f64 {
    if x.abs() >= alpha {
        x
    } else {
        0.0
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha >= 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("threshold must be a finite value >= 0, got {alpha}")))
    }
}

pub fn soft_threshold(x: &Tensor, alpha: f64) -> Result<Tensor> {
    check_alpha(alpha)?;
    if alpha == 0.0 {
        return Ok(x.clone());
    }
    Ok(x.map(|v| soft(v, alpha)))
}

pub fn hard_threshold(x: &Tensor, alpha: f64) -> Result<Tensor> {
    check_alpha(alpha)?;
    Ok(x.map(|v| hard(v, alpha)))
}

pub(crate) fn soft_in_place(x: &mut [f64], alpha: f64) {
    if alpha == 0.0 {
        return;
    }
    for v in x {
        *v = soft(*v, alpha);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    #[test]
    fn soft_formula() {
        assert_eq!(soft(1.5, 1.0), 0.5);
        assert_eq!(soft(-1.5, 1.0), -0.5);
        assert_eq!(soft(0.3, 1.0), 0.0);
        let x = Tensor::vector(vec![-2.0, 0.1, 3.0]).unwrap();
        assert_eq!(soft_threshold(&x, 0.0).unwrap(), x);
    }

    #[test]
    fn hard_formula() {
        let x = Tensor::vector(vec![0.5, 2.0]).unwrap();
        assert_eq!(hard_threshold(&x, 1.0).unwrap().as_slice(), &[0.0, 2.0]);
        assert_eq!(hard_threshold(&x, 0.0).unwrap(), x);
        // |x| == alpha is kept.
        let b = Tensor::vector(vec![-1.0, 1.0]).unwrap();
        assert_eq!(hard_threshold(&b, 1.0).unwrap(), b);
    }

    #[test]
    fn negative_threshold_is_rejected() {
        let x = Tensor::vector(vec![1.0]).unwrap();
        assert!(soft_threshold(&x, -0.1).is_err());
        assert!(hard_threshold(&x, -0.1).is_err());
    }

    /// Brute-force prox oracle: grid search of 0.5 (z - x)^2 + alpha |z|.
    pub(crate) fn grid_prox(x: f64, alpha: f64) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        let steps = 60_000;
        for k in 0..=steps {
            let z = -3.0 + 6.0 * k as f64 / steps as f64;
            let f = 0.5 * (z - x).powi(2) + alpha * z.abs();
            if f < best.0 {
                best = (f, z);
            }
        }
        best.1
    }

    #[test]
    fn soft_is_the_l1_prox() {
        let mut rng = Rng::new(21);
        for _ in 0..50 {
            let x = rng.uniform(-2.5, 2.5);
            let alpha = rng.uniform(0.0, 1.5);
            let z = soft(x, alpha);
            assert!((z - grid_prox(x, alpha)).abs() <= 1e-4, "x={x} a={alpha}");
        }
    }

    proptest! {
        #[test]
        fn soft_is_non_expansive(
            xs in prop::collection::vec(-10.0f64..10.0, 1..20),
            shift in prop::collection::vec(-3.0f64..3.0, 20),
            alpha in 0.0f64..4.0,
        ) {
            let ys: Vec<f64> = xs.iter().zip(&shift).map(|(a, b)| a + b).collect();
            let x = Tensor::vector(xs).unwrap();
            let y = Tensor::vector(ys).unwrap();
            let sx = soft_threshold(&x, alpha).unwrap();
            let sy = soft_threshold(&y, alpha).unwrap();
            prop_assert!(sx.sub(&sy).unwrap().norm() <= x.sub(&y).unwrap().norm() + 1e-12);
        }
    }
}
