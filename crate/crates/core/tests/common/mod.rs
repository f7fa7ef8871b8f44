//! Synthetic periodic datasets shared by the training and evaluation suites.
#![allow(dead_code)]

use nop_core::nop::{Arch, ModelConfig};
use nop_core::pde::{DataSpec, DatasetManifest, Problem};
use nop_core::{Dataset, Grid, Rng, Tensor};

/// Random trigonometric polynomials of degree `< 6` on `s` points of the unit circle.
pub fn band_limited_inputs(n: usize, s: usize, seed: u64) -> Tensor {
    let mut rng = Rng::new(seed);
    let mut data = Vec::with_capacity(n * s);
    for _ in 0..n {
        let c: Vec<(f64, f64)> = (1..6).map(|k| (rng.normal() / k as f64, rng.normal() / k as f64)).collect();
        for i in 0..s {
            let x = std::f64::consts::TAU * i as f64 / s as f64;
            data.push(c.iter().enumerate().map(|(k, (a, b))| a * ((k + 1) as f64 * x).cos() + b * ((k + 1) as f64 * x).sin()).sum());
        }
    }
    Tensor::new(&[n, s, 1], data).unwrap()
}

/// Pairs `(a, map(a))` on the periodic unit interval.
pub fn toy(n: usize, s: usize, seed: u64, map: impl Fn(&Tensor) -> Tensor) -> Dataset {
    let inputs = band_limited_inputs(n, s, seed);
    let outputs = map(&inputs);
    Dataset {
        manifest: DatasetManifest {
            spec: DataSpec::new(Problem::Burgers, n, s, seed),
            resolution: s,
            input_channels: 1,
            output_channels: 1,
        },
        grid: Grid::periodic_1d(s, 1.0).unwrap(),
        inputs,
        outputs,
    }
}

pub fn tiny_fno() -> ModelConfig {
    let mut c = ModelConfig::fno_1d();
    c.arch = Arch::Fno { modes: vec![8] };
    c.width = 16;
    c.layers = 2;
    c.projection_width = 32;
    c
}
