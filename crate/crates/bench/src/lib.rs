//! Fixed inputs for the criterion benches, so every run measures the same work.

use nop_core::pde::{build_dataset, DataSpec, Problem};
use nop_core::{Dataset, Rng, Tensor};

/// Standard normal tensor from a fixed stream.
pub fn normal_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = Rng::new(seed);
    let n = shape.iter().product();
    Tensor::new(shape, rng.normals(n)).expect("shape matches data")
}

/// Small Burgers dataset on `s` points, generated at `4 s` and downsampled.
pub fn burgers(n: usize, s: usize) -> Dataset {
    let mut spec = DataSpec::new(Problem::Burgers, n, 4 * s, 1);
    spec.downsample = 4;
    build_dataset(&spec).expect("burgers data")
}
