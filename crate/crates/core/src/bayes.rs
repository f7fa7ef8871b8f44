//! Posterior means by preconditioned Crank-Nicolson MCMC.
//!
//! The chain state is any tensor drawn from a Gaussian prior. A forward map
//! takes the state to an observation vector; only the misfit to the data
//! enters the acceptance test, so the sampler is well defined on the function
//! space and the acceptance rate does not degrade with resolution.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::{FieldSample, Grid};
use crate::random::Rng;
use crate::tensor::Tensor;

fn d_gamma() -> f64 {
    0.1
}
fn d_beta() -> f64 {
    0.1
}
fn d_burn() -> usize {
    5000
}
fn d_keep() -> usize {
    25000
}
fn d_thin() -> usize {
    25
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcnConfig {
    /// Observation noise scale.
    #[serde(default = "d_gamma")]
    pub gamma: f64,
    /// Read the noise covariance literally as `(1/gamma^2) I` instead of `gamma^2 I`.
    #[serde(default)]
    pub literal_covariance: bool,
    #[serde(default = "d_beta")]
    pub beta: f64,
    #[serde(default = "d_burn")]
    pub burn_in: usize,
    #[serde(default = "d_keep")]
    pub samples: usize,
    /// Every `thin`-th retained state is stored.
    #[serde(default = "d_thin")]
    pub thin: usize,
}

impl Default for PcnConfig {
    fn default() -> Self {
        PcnConfig {
            gamma: d_gamma(),
            literal_covariance: false,
            beta: d_beta(),
            burn_in: d_burn(),
            samples: d_keep(),
            thin: d_thin(),
        }
    }
}

impl PcnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::Config(format!("noise scale gamma must be positive, got {}", self.gamma)));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::Config(format!("pCN step beta must lie in [0, 1), got {}", self.beta)));
        }
        if self.samples == 0 || self.thin == 0 {
            return Err(Error::Config("pCN needs at least one retained sample and thin >= 1".into()));
        }
        Ok(())
    }

    /// Weight `w` in `-w/2 ||y - G||^2`.
    pub fn misfit_weight(&self) -> f64 {
        if self.literal_covariance {
            self.gamma * self.gamma
        } else {
            1.0 / (self.gamma * self.gamma)
        }
    }
}

/// Points `(i/8, j/8)` for `i, j = 1..7`, `i` major.
pub fn observation_points() -> Vec<[f64; 2]> {
    let mut p = Vec::with_capacity(49);
    for i in 1..=7 {
        for j in 1..=7 {
            p.push([i as f64 / 8.0, j as f64 / 8.0]);
        }
    }
    p
}

/// Bilinear interpolation of a periodic field on `[0,1)^2` at the 7 x 7 interior points.
pub fn observe(w: &FieldSample) -> Result<Vec<f64>> {
    let g = &w.grid;
    if g.dim() != 2 || !g.periodic.iter().all(|&p| p) || w.channels() != 1 {
        return Err(Error::Config("observation needs a scalar field on the 2-D torus".into()));
    }
    let (sx, sy) = (g.sizes[0], g.sizes[1]);
    let v = w.data();
    Ok(observation_points()
        .iter()
        .map(|&[x, y]| {
            let (fx, fy) = (x / g.extents[0] * sx as f64, y / g.extents[1] * sy as f64);
            let (i0, j0) = (fx.floor() as usize % sx, fy.floor() as usize % sy);
            let (tx, ty) = (fx - fx.floor(), fy - fy.floor());
            let (i1, j1) = ((i0 + 1) % sx, (j0 + 1) % sy);
            let at = |i: usize, j: usize| v[i * sy + j];
            (1.0 - tx) * ((1.0 - ty) * at(i0, j0) + ty * at(i0, j1)) + tx * ((1.0 - ty) * at(i1, j0) + ty * at(i1, j1))
        })
        .collect())
}

/// `-w/2 ||y - pred||^2` with `w` from [`PcnConfig::misfit_weight`].
pub fn log_likelihood(pred: &[f64], y: &[f64], cfg: &PcnConfig) -> Result<f64> {
    if pred.len() != y.len() {
        return Err(Error::shape("log_likelihood", &[pred.len()], &[y.len()]));
    }
    let sq: f64 = pred.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(-0.5 * cfg.misfit_weight() * sq)
}

#[derive(Clone, Debug)]
pub struct ChainResult {
    pub mean: Tensor,
    /// Thinned retained states.
    pub samples: Vec<Tensor>,
    /// Accepted fraction of post-burn-in proposals.
    pub acceptance: f64,
    pub forward_calls: usize,
    pub forward_seconds: f64,
    pub warning: Option<String>,
}

impl ChainResult {
    pub fn seconds_per_call(&self) -> f64 {
        self.forward_seconds / self.forward_calls.max(1) as f64
    }
}

/// pCN chain from `init`: `w' = sqrt(1 - beta^2) w + beta xi`, `xi` from `prior`,
/// accepted with probability `min(1, exp(Phi(w) - Phi(w')))`.
pub fn pcn_chain(
    cfg: &PcnConfig,
    y: &[f64],
    forward: &mut dyn FnMut(&Tensor) -> Result<Vec<f64>>,
    prior: &mut dyn FnMut(&mut Rng) -> Result<Tensor>,
    init: Tensor,
    rng: &mut Rng,
) -> Result<ChainResult> {
    cfg.validate()?;
    let mut calls = 0usize;
    let mut secs = 0.0;
    let mut timed = |w: &Tensor, calls: &mut usize, secs: &mut f64| -> Result<f64> {
        let t0 = Instant::now();
        let out = forward(w)?;
        *secs += t0.elapsed().as_secs_f64();
        *calls += 1;
        Ok(-log_likelihood(&out, y, cfg)?)
    };
    let mut w = init;
    let mut phi = timed(&w, &mut calls, &mut secs)?;
    let a = (1.0 - cfg.beta * cfg.beta).sqrt();
    let mut sum = Tensor::zeros(w.shape());
    let mut samples = Vec::new();
    let mut accepted = 0usize;
    for it in 0..cfg.burn_in + cfg.samples {
        let xi = prior(rng)?;
        if xi.shape() != w.shape() {
            return Err(Error::shape("pcn proposal", xi.shape(), w.shape()));
        }
        let prop = Tensor::new(w.shape(), w.data().iter().zip(xi.data()).map(|(u, e)| a * u + cfg.beta * e).collect())?;
        let phi_p = timed(&prop, &mut calls, &mut secs)?;
        if !phi_p.is_finite() {
            return Err(Error::Numeric(format!("non-finite misfit at pCN step {it}")));
        }
        let log_alpha = (phi - phi_p).min(0.0);
        // Drawn every step so chains with different forward maps stay on one stream.
        let u = rng.uniform();
        let accept = log_alpha >= 0.0 || u.ln() < log_alpha;
        if accept {
            w = prop;
            phi = phi_p;
        }
        if it >= cfg.burn_in {
            accepted += accept as usize;
            sum.data_mut().iter_mut().zip(w.data()).for_each(|(s, x)| *s += x);
            if (it - cfg.burn_in) % cfg.thin == 0 {
                samples.push(w.clone());
            }
        }
    }
    let acceptance = accepted as f64 / cfg.samples as f64;
    let warning = if acceptance < 0.05 {
        Some(format!("pCN acceptance {acceptance:.3} is below 0.05; decrease beta (now {})", cfg.beta))
    } else if acceptance > 0.95 && cfg.beta > 0.0 {
        Some(format!("pCN acceptance {acceptance:.3} is above 0.95; increase beta (now {})", cfg.beta))
    } else {
        None
    };
    Ok(ChainResult {
        mean: sum.scale(1.0 / cfg.samples as f64),
        samples,
        acceptance,
        forward_calls: calls,
        forward_seconds: secs,
        warning,
    })
}

#[derive(Clone, Debug)]
pub struct InversionComparison {
    pub solver: ChainResult,
    pub surrogate: ChainResult,
    /// Forward maps applied to their own posterior means.
    pub solver_pushforward: Vec<f64>,
    pub surrogate_pushforward: Vec<f64>,
    /// `||mean_surrogate - mean_solver|| / ||mean_solver||`.
    pub mean_rel_diff: f64,
}

impl InversionComparison {
    /// `map,calls,seconds,seconds_per_call,acceptance` rows.
    pub fn timing_csv(&self) -> String {
        let mut s = String::from("map,calls,seconds,seconds_per_call,acceptance\n");
        for (name, c) in [("solver", &self.solver), ("surrogate", &self.surrogate)] {
            s.push_str(&format!(
                "{name},{},{:.6e},{:.6e},{:.6}\n",
                c.forward_calls,
                c.forward_seconds,
                c.seconds_per_call(),
                c.acceptance
            ));
        }
        s
    }
}

/// Runs both chains from the same initial state and the same proposal stream.
pub fn invert_compare(
    cfg: &PcnConfig,
    y: &[f64],
    solver: &mut dyn FnMut(&Tensor) -> Result<Vec<f64>>,
    surrogate: &mut dyn FnMut(&Tensor) -> Result<Vec<f64>>,
    prior: &mut dyn FnMut(&mut Rng) -> Result<Tensor>,
    init: Tensor,
    rng: &Rng,
) -> Result<InversionComparison> {
    let a = pcn_chain(cfg, y, solver, prior, init.clone(), &mut rng.clone())?;
    let b = pcn_chain(cfg, y, surrogate, prior, init, &mut rng.clone())?;
    let den = a.mean.norm();
    let mean_rel_diff = if den == 0.0 {
        b.mean.norm()
    } else {
        b.mean.sub(&a.mean)?.norm() / den
    };
    let solver_pushforward = solver(&a.mean)?;
    let surrogate_pushforward = surrogate(&b.mean)?;
    Ok(InversionComparison {
        solver: a,
        surrogate: b,
        solver_pushforward,
        surrogate_pushforward,
        mean_rel_diff,
    })
}

/// Field view of a chain state on `grid`.
pub fn as_field(grid: &Grid, w: &Tensor) -> Result<FieldSample> {
    let mut shape = grid.sizes.clone();
    shape.push(1);
    FieldSample::new(grid.clone(), w.reshape(&shape)?)
}
