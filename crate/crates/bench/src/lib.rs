//! Shared inputs for the benchmarks.

use infomax_core::{Rng, Tensor};

/// Standard-normal tensor of `shape` from `seed`.
pub fn randn(seed: u64, shape: &[usize]) -> Tensor {
    let mut rng = Rng::seed_from(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.normal()).collect()).expect("shape and data agree")
}
