//! Closed-form solutions for the PDE solvers.

use std::f64::consts::PI;

use nop_core::pde::{solve_burgers, solve_darcy_fdm, solve_navier_stokes, solve_poisson_green, BurgersOptions, NsOptions};
use nop_core::{FieldSample, Grid};

/// Max error of the Green's-function solve of `-u'' = sin(pi x)` against `sin(pi x) / pi^2`.
pub fn poisson_sine_error(s: usize) -> f64 {
    let g = Grid::unit_interval(s).unwrap();
    let xs = g.axis_coords(0);
    let f = FieldSample::scalar(g, xs.iter().map(|x| (PI * x).sin()).collect()).unwrap();
    let u = solve_poisson_green(&f).unwrap();
    xs.iter()
        .zip(u.data())
        .map(|(x, v)| (v - (PI * x).sin() / (PI * PI)).abs())
        .fold(0.0, f64::max)
}

/// Series solution of `-Lap u = 1` on the unit square with zero boundary values.
pub fn poisson_square_series(x: f64, y: f64) -> f64 {
    let mut u = 0.0;
    for m in (1..400).step_by(2) {
        for n in (1..400).step_by(2) {
            let (mf, nf) = (m as f64, n as f64);
            u += 16.0 / (PI.powi(4) * mf * nf * (mf * mf + nf * nf)) * (mf * PI * x).sin() * (nf * PI * y).sin();
        }
    }
    u
}

pub fn constant_coeff(s: usize, value: f64) -> FieldSample {
    FieldSample::scalar(Grid::unit_square(s).unwrap(), vec![value; s * s]).unwrap()
}

/// Darcy with `a = 1`, `f = 1` on an odd grid: error at the center against the series.
pub fn darcy_unit_center_error(s: usize) -> f64 {
    assert!(s % 2 == 1);
    let u = solve_darcy_fdm(&constant_coeff(s, 1.0), 1.0).unwrap();
    (u.data()[(s / 2) * s + s / 2] - poisson_square_series(0.5, 0.5)).abs()
}

/// Heat-only Burgers from `sin x` on `[0, 2 pi)`: max error against `exp(-nu t) sin x`.
pub fn burgers_heat_error(s: usize, nu: f64, t: f64) -> f64 {
    let g = Grid::periodic_1d(s, 2.0 * PI).unwrap();
    let xs = g.axis_coords(0);
    let u0 = FieldSample::scalar(g, xs.iter().map(|x| x.sin()).collect()).unwrap();
    let u = solve_burgers(&u0, t, nu, &BurgersOptions { dt: 1e-3, nonlinear: false }).unwrap();
    xs.iter()
        .zip(u.data())
        .map(|(x, v)| (v - (-nu * t).exp() * x.sin()).abs())
        .fold(0.0, f64::max)
}

/// Unforced Taylor-Green vortex on the unit torus: relative L2 error at time `t`.
pub fn taylor_green_error(s: usize, nu: f64, t: f64) -> f64 {
    let g = Grid::torus(s).unwrap();
    let c = g.coords();
    let tg = |t: f64| -> Vec<f64> {
        c.data()
            .chunks_exact(2)
            .map(|p| 4.0 * PI * (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).sin() * (-8.0 * PI * PI * nu * t).exp())
            .collect()
    };
    let w0 = FieldSample::scalar(g.clone(), tg(0.0)).unwrap();
    let traj = solve_navier_stokes(&w0, t, nu, t, &NsOptions { dt: 1e-3, forcing: false }).unwrap();
    let exact = FieldSample::scalar(g, tg(t)).unwrap();
    traj[0].values.sub(&exact.values).unwrap().norm() / exact.values.norm()
}
