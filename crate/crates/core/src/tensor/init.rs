//! Weight initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Result, Shape, Tensor, TensorError};

/// Standard deviation used for every convolution weight.
pub const WEIGHT_STD: f64 = 0.01;

/// Samples falling outside `mean ± TRUNCATION_SIGMAS·std` are redrawn.
pub const TRUNCATION_SIGMAS: f64 = 2.0;

/// Zero-mean normal samples truncated to ±2σ by rejection.
pub fn truncated_gaussian<R: Rng + ?Sized>(shape: Shape, mean: f64, std: f64, rng: &mut R) -> Result<Tensor> {
    if !(std > 0.0 && std.is_finite()) {
        return Err(TensorError::InvalidArgument {
            op: "truncated_gaussian",
            msg: format!("std must be positive, got {std}"),
        });
    }
    let data = (0..shape.numel())
        .map(|_| loop {
            let z: f64 = StandardNormal.sample(rng);
            if z.abs() <= TRUNCATION_SIGMAS {
                break mean + std * z;
            }
        })
        .collect();
    Tensor::new(shape, data)
}

/// Seeded convenience wrapper around [`truncated_gaussian`].
pub fn init_truncated_gaussian(shape: Shape, mean: f64, std: f64, seed: u64) -> Result<Tensor> {
    truncated_gaussian(shape, mean, std, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn init_zeros(shape: Shape) -> Tensor {
    Tensor::zeros(shape)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_lie_within_two_sigma() {
        let t = init_truncated_gaussian(Shape::new(10, 10, 10, 10), 0.0, WEIGHT_STD, 3).unwrap();
        assert!(t.data().iter().all(|v| v.abs() <= 0.02));
        assert!(t.data().iter().any(|v| v.abs() > 0.015));
    }

    #[test]
    fn same_seed_same_tensor() {
        let s = Shape::new(2, 3, 3, 3);
        assert_eq!(
            init_truncated_gaussian(s, 0.0, 0.01, 42).unwrap(),
            init_truncated_gaussian(s, 0.0, 0.01, 42).unwrap()
        );
        assert_ne!(
            init_truncated_gaussian(s, 0.0, 0.01, 42).unwrap(),
            init_truncated_gaussian(s, 0.0, 0.01, 43).unwrap()
        );
    }

    #[test]
    fn non_positive_std_rejected() {
        assert!(init_truncated_gaussian(Shape::SCALAR, 0.0, 0.0, 1).is_err());
    }
}
