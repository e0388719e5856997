use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::norm2;

/// Power iteration on `KᵀK`, returning an estimate of `‖K‖₂`.
///
/// The estimate approaches the norm from below; callers that need an upper
/// bound inflate it. Deterministic for a given seed. A zero operator yields 0.
pub fn estimate_operator_norm<F, G>(apply_k: F, apply_kt: G, dim: usize, iters: usize, seed: u64) -> f64
where
    F: Fn(&[f64]) -> Vec<f64>,
    G: Fn(&[f64]) -> Vec<f64>,
{
    if dim == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut estimate = 0.0;
    for _ in 0..iters.max(1) {
        let kx = apply_k(&x);
        let gx = apply_kt(&kx);
        let ng = norm2(&gx);
        if ng == 0.0 || !ng.is_finite() {
            return if ng == 0.0 { 0.0 } else { f64::INFINITY };
        }
        // ‖KᵀK x‖ for unit x approximates ‖K‖².
        estimate = ng.sqrt();
        x = gx;
        x.iter_mut().for_each(|v| *v /= ng);
    }
    // Both quantities are lower bounds on ‖K‖ for a unit iterate.
    norm2(&apply_k(&x)).max(estimate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn dense(m: &Matrix) -> f64 {
        estimate_operator_norm(|x| m.matvec(x), |y| m.matvec_t(y), m.cols(), 100, 7)
    }

    #[test]
    fn identity_has_unit_norm() {
        assert!((dense(&Matrix::identity(4)) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn diagonal_norm_is_largest_entry() {
        let m = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((dense(&m) - 3.0).abs() < 1e-6);
    }

    #[test]
    fn zero_operator() {
        assert_eq!(dense(&Matrix::zeros(3, 2)), 0.0);
    }

    #[test]
    fn matches_dense_svd() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = Matrix::from_row_major(10, 6, data).unwrap();
        let svd = nalgebra::DMatrix::from_row_slice(10, 6, m.as_slice()).singular_values();
        let top = svd.iter().copied().fold(0.0, f64::max);
        let est = dense(&m);
        assert!((est - top).abs() / top < 1e-4, "{est} vs {top}");
    }

    #[test]
    fn deterministic_for_seed() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0], vec![0.0, 3.0]]).unwrap();
        assert_eq!(dense(&m).to_bits(), dense(&m).to_bits());
    }
}
