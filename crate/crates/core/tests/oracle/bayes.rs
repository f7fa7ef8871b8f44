//! Closed-form targets for the pCN sampler.

use std::f64::consts::TAU;

use nop_core::bayes::{pcn_chain, PcnConfig};
use nop_core::random::{sample_grf, MeasureSpec};
use nop_core::{Grid, Rng, Tensor};

pub fn scalar_prior() -> impl FnMut(&mut Rng) -> nop_core::Result<Tensor> {
    |rng: &mut Rng| Tensor::new(&[1], vec![rng.normal()])
}

/// Prior `N(0, 1)`, one observation `y = w + N(0, gamma^2)`: `(chain mean, exact y / (1 + gamma^2), acceptance)`.
pub fn conjugate_mean(cfg: &PcnConfig, y: f64, seed: u64) -> (f64, f64, f64) {
    let mut fwd = |w: &Tensor| Ok(w.data().to_vec());
    let r = pcn_chain(cfg, &[y], &mut fwd, &mut scalar_prior(), Tensor::zeros(&[1]), &mut Rng::new(seed)).unwrap();
    (r.mean.data()[0], y / (1.0 + cfg.gamma * cfg.gamma), r.acceptance)
}

pub const PROBE_MODES: [[i64; 2]; 6] = [[1, 0], [0, 1], [1, 1], [1, -1], [2, 0], [0, 3]];

/// Flat-likelihood chain on the `s x s` torus under the vorticity prior.
/// Returns `(mode, sampled E|w_k|^2 / lambda_k)` for each of [`PROBE_MODES`], plus the acceptance rate.
pub fn flat_chain_modal_ratios(s: usize, cfg: &PcnConfig, seed: u64) -> (Vec<([i64; 2], f64)>, f64) {
    let spec = MeasureSpec::ns_vorticity_ic();
    let grid = Grid::torus(s).unwrap();
    let mut prior = |rng: &mut Rng| Ok(sample_grf(&spec, &grid, rng)?.values);
    let mut rng = Rng::new(seed);
    let init = prior(&mut rng).unwrap();
    let mut fwd = |_: &Tensor| Ok(Vec::new());
    let r = pcn_chain(cfg, &[], &mut fwd, &mut prior, init, &mut rng).unwrap();
    let n = (s * s) as f64;
    let ratios = PROBE_MODES
        .iter()
        .map(|&k| {
            let mut second = 0.0;
            for w in &r.samples {
                let (mut re, mut im) = (0.0, 0.0);
                for p in 0..s * s {
                    let phase = TAU * (k[0] * (p / s) as i64 + k[1] * (p % s) as i64) as f64 / s as f64;
                    re += w.data()[p] * phase.cos();
                    im -= w.data()[p] * phase.sin();
                }
                second += (re / n).powi(2) + (im / n).powi(2);
            }
            let got = second / r.samples.len() as f64;
            (k, got / spec.eigenvalue(spec.laplacian_eigenvalue(&[k[0].abs(), k[1].abs()])))
        })
        .collect();
    (ratios, r.acceptance)
}
