use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::tensor::Tensor;

/// Uniform in `±sqrt(3 / fan_in)`, i.e. unit-variance activations for
/// unit-variance inputs.
pub fn fan_in_uniform<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<f32> {
    let limit = (3.0 / fan_in.max(1) as f64).sqrt();
    uniform(shape, -limit, limit, rng)
}

/// Uniform in `[lo, hi)`.
pub fn uniform<R: Rng + ?Sized>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Tensor<f32> {
    let dist = Uniform::new(lo, hi).expect("valid interval");
    Tensor::from_fn(shape.to_vec(), |_| dist.sample(rng) as f32)
}

/// Random `n × n` orthogonal matrix: the Q factor of a Gaussian matrix, with
/// column signs fixed so the distribution is uniform over O(n).
pub fn orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Tensor<f32> {
    let a = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = a.qr();
    let (q, r) = (qr.q(), qr.r());
    Tensor::from_fn([n, n], |i| {
        let (row, col) = (i / n, i % n);
        let sign = if r[(col, col)] < 0.0 { -1.0 } else { 1.0 };
        (q[(row, col)] * sign) as f32
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_rows_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 7;
        let q = orthogonal(n, &mut rng);
        for i in 0..n {
            for j in 0..n {
                let dot: f32 = q.row(i).iter().zip(q.row(j)).map(|(a, b)| a * b).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-5, "({i},{j}) = {dot}");
            }
        }
    }

    #[test]
    fn fan_in_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = fan_in_uniform(&[300, 4], 300, &mut rng);
        let lim = (3.0f32 / 300.0).sqrt();
        assert!(t.data().iter().all(|v| v.abs() <= lim));
    }
}
