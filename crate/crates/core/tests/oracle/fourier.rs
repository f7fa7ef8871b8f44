//! Naive DFTs.

use std::f64::consts::PI;

use nop_core::spectral;
use nop_core::{Rng, Tensor};

pub fn random_complex(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let mut s = shape.to_vec();
    s.push(2);
    Tensor::from_fn(&s, |_| rng.normal())
}

pub fn random_real(rng: &mut Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.normal())
}

/// O(n^2) DFT along axis 0 of an `(n, 2)` tensor.
pub fn naive_dft(x: &Tensor) -> Tensor {
    let n = x.shape()[0];
    let d = x.data();
    Tensor::from_fn(&[n, 2], |p| {
        let (k, part) = (p / 2, p % 2);
        (0..n)
            .map(|j| {
                let th = -2.0 * PI * ((k * j) % n) as f64 / n as f64;
                let (re, im) = (d[2 * j], d[2 * j + 1]);
                if part == 0 {
                    re * th.cos() - im * th.sin()
                } else {
                    re * th.sin() + im * th.cos()
                }
            })
            .sum()
    })
}

/// O(n^2 m^2) 2-D DFT of an `(n, m, 2)` tensor.
pub fn naive_dft2(x: &Tensor) -> Tensor {
    let (n, m) = (x.shape()[0], x.shape()[1]);
    let d = x.data();
    let mut out = vec![0.0; n * m * 2];
    for k1 in 0..n {
        for k2 in 0..m {
            let (mut re, mut im) = (0.0, 0.0);
            for j1 in 0..n {
                for j2 in 0..m {
                    let th = -2.0 * PI * (((k1 * j1) % n) as f64 / n as f64 + ((k2 * j2) % m) as f64 / m as f64);
                    let p = (j1 * m + j2) * 2;
                    re += d[p] * th.cos() - d[p + 1] * th.sin();
                    im += d[p] * th.sin() + d[p + 1] * th.cos();
                }
            }
            out[(k1 * m + k2) * 2] = re;
            out[(k1 * m + k2) * 2 + 1] = im;
        }
    }
    Tensor::new(&[n, m, 2], out).unwrap()
}

/// Max abs difference between the library FFT and [`naive_dft`] on a random length-`n` signal.
pub fn fft_vs_naive(n: usize, seed: u64) -> f64 {
    let x = random_complex(&mut Rng::new(seed), &[n]);
    spectral::fft(&x, &[0]).unwrap().max_abs_diff(&naive_dft(&x))
}

/// `|sum |x|^2 - sum |X|^2 / n|` relative to `sum |x|^2`.
pub fn parseval_gap(n: usize, seed: u64) -> f64 {
    let x = random_complex(&mut Rng::new(seed), &[n]);
    let w = spectral::fft(&x, &[0]).unwrap();
    let lhs = x.data().iter().map(|v| v * v).sum::<f64>();
    let rhs = w.data().iter().map(|v| v * v).sum::<f64>() / n as f64;
    (lhs - rhs).abs() / lhs.max(1e-300)
}
