use crate::error::{invalid, Result};
use crate::operators::LinearOperator;
use crate::rng::Rng;
use crate::tensor::dot;

/// Multiplier applied to the power-iteration estimate so the returned value
/// is an upper bound on `lambda_max(A^T A)`.
pub const LIPSCHITZ_SAFETY: f64 = 1.05;

/// Rayleigh quotients `|A v_k|^2` of the normalised power iterates of `A^T A`.
/// For a PSD matrix the sequence is non-decreasing.
pub fn rayleigh_sequence(op: &dyn LinearOperator, iters: usize, rng: &mut Rng) -> Vec<f64> {
    let n = op.in_len();
    let mut v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let mut av = vec![0.0; op.out_len()];
    let mut seq = Vec::with_capacity(iters);
    for _ in 0..iters {
        let norm = dot(&v, &v).sqrt();
        if norm == 0.0 {
            seq.push(0.0);
            break;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        op.apply_into(&v, &mut av);
        seq.push(dot(&av, &av));
        op.adjoint_into(&av, &mut v);
    }
    seq
}

/// Estimate of `lambda_max(A^T A)` times [`LIPSCHITZ_SAFETY`].
pub fn power_iteration_l(op: &dyn LinearOperator, iters: usize, rng: &mut Rng) -> Result<f64> {
    if iters < 10 {
        return Err(invalid(format!("power iteration needs >= 10 iterations, got {iters}")));
    }
    let seq = rayleigh_sequence(op, iters, rng);
    Ok(seq.last().copied().unwrap_or(0.0) * LIPSCHITZ_SAFETY)
}

/// Deterministic Lipschitz estimate used when a solver's step is `Auto`.
pub fn default_lipschitz(op: &dyn LinearOperator) -> f64 {
    power_iteration_l(op, 200, &mut Rng::new(0x5EED_1E57)).expect("200 >= 10 iterations")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::MatrixOperator;
    use crate::tensor::Tensor;

    fn diag(values: &[f64]) -> MatrixOperator {
        let n = values.len();
        let mut m = vec![0.0; n * n];
        for (i, v) in values.iter().enumerate() {
            m[i * n + i] = *v;
        }
        MatrixOperator::new(Tensor::from_vec(&[n, n], m).unwrap()).unwrap()
    }

    #[test]
    fn scaled_identity() {
        let l = power_iteration_l(&diag(&[2.0; 5]), 20, &mut Rng::new(1)).unwrap();
        assert!((l - 4.0 * 1.05).abs() <= 0.01 * 4.2);
    }

    #[test]
    fn diagonal_spectrum() {
        // lambda_max(A^T A) of diag(1, 3) is 9.
        let l = power_iteration_l(&diag(&[1.0, 3.0]), 100, &mut Rng::new(2)).unwrap();
        assert!((l - 9.45).abs() < 1e-6, "{l}");
    }

    #[test]
    fn rayleigh_sequence_is_monotone() {
        let mut rng = Rng::new(3);
        let a: Vec<f64> = (0..12 * 9).map(|_| rng.normal()).collect();
        let op = MatrixOperator::new(Tensor::from_vec(&[12, 9], a).unwrap()).unwrap();
        let seq = rayleigh_sequence(&op, 200, &mut Rng::new(4));
        for w in seq.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn too_few_iterations() {
        assert!(power_iteration_l(&diag(&[1.0]), 5, &mut Rng::new(0)).is_err());
    }
}
