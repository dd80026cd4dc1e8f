//! Shared fixtures for the criterion benchmarks.

use fistanet::rng::Rng;
use fistanet::tensor::{Image2D, Tensor};

pub fn random_image(seed: u64, size: usize) -> Image2D {
    let mut rng = Rng::new(seed);
    let values = (0..size * size).map(|_| rng.next_f64()).collect();
    Image2D::from_vec(size, size, values).expect("square image")
}

pub fn random_tensor(seed: u64, dims: &[usize]) -> Tensor {
    let mut rng = Rng::new(seed);
    let n = dims.iter().product();
    Tensor::from_vec(dims, (0..n).map(|_| rng.normal()).collect()).expect("dims match")
}
