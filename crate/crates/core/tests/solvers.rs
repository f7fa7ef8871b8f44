mod oracle;

use std::f64::consts::PI;

use nop_core::pde::{
    build_dataset, downsample, solve_burgers, solve_darcy_fdm, solve_navier_stokes,
    BurgersOptions, DarcyOperator, DataSpec, FieldSample, Grid, NsOptions, Problem,
};
use nop_core::random::{sample_grf, MeasureSpec, Rng};
use oracle::pde::{burgers_heat_error, darcy_unit_center_error, poisson_sine_error, taylor_green_error};
use proptest::prelude::*;

#[test]
fn poisson_sine_source() {
    let err = poisson_sine_error(85);
    assert!(err < 1e-3, "max error {err}");
}

#[test]
fn darcy_unit_coefficient_matches_series() {
    let err = darcy_unit_center_error(85);
    assert!(err < 1e-3, "center error {err}");
}

fn smooth_coeff(s: usize) -> FieldSample {
    let g = Grid::unit_square(s).unwrap();
    let c = g.coords();
    let v = c
        .data()
        .chunks_exact(2)
        .map(|p| 1.0 + 0.5 * (2.0 * PI * p[0]).sin() * (PI * p[1]).cos())
        .collect();
    FieldSample::scalar(g, v).unwrap()
}

#[test]
fn darcy_second_order_refinement() {
    let u1 = solve_darcy_fdm(&smooth_coeff(43), 1.0).unwrap();
    let u2 = solve_darcy_fdm(&smooth_coeff(85), 1.0).unwrap();
    let u3 = solve_darcy_fdm(&smooth_coeff(169), 1.0).unwrap();
    let d12 = downsample(&u2, &[2, 2]).unwrap().values.max_abs_diff(&u1.values);
    let d23 = downsample(&u3, &[4, 4]).unwrap().values.max_abs_diff(&downsample(&u2, &[2, 2]).unwrap().values);
    let ratio = d12 / d23;
    assert!((3.0..=5.0).contains(&ratio), "Richardson ratio {ratio}");
}

#[test]
fn darcy_flux_balance_residual() {
    let a = sample_grf(&MeasureSpec::darcy_coeff(), &Grid::unit_square(65).unwrap(), &mut Rng::new(3)).unwrap();
    let u = solve_darcy_fdm(&a, 1.0).unwrap();
    let op = DarcyOperator::new(&a).unwrap();
    let mut au = vec![0.0; 65 * 65];
    op.apply(u.data(), &mut au);
    for i in 1..64 {
        for j in 1..64 {
            let r = (au[i * 65 + j] - 1.0).abs();
            assert!(r < 1e-8, "residual {r} at ({i}, {j})");
        }
    }
}

#[test]
fn burgers_heat_only_is_exact() {
    let err = burgers_heat_error(128, 0.1, 1.0);
    assert!(err < 1e-8, "max error {err}");
}

#[test]
fn burgers_time_step_is_first_order() {
    let g = Grid::periodic_1d(2048, 2.0 * PI).unwrap();
    let u0 = sample_grf(&MeasureSpec::burgers_ic(), &g, &mut Rng::new(21)).unwrap();
    let run = |dt: f64| solve_burgers(&u0, 1.0, 0.1, &BurgersOptions { dt, nonlinear: true }).unwrap().values;
    let (a, b, c) = (run(4e-4), run(2e-4), run(1e-4));
    let ratio = a.max_abs_diff(&b) / b.max_abs_diff(&c);
    assert!((1.8..=2.2).contains(&ratio), "step-halving ratio {ratio}");
    assert!(b.max_abs_diff(&c) < 1e-3 * c.max_abs());
}

#[test]
fn burgers_large_viscosity_is_diffusive() {
    let g = Grid::periodic_1d(256, 2.0 * PI).unwrap();
    let mut u = sample_grf(&MeasureSpec::burgers_ic(), &g, &mut Rng::new(22)).unwrap();
    let opts = BurgersOptions::default();
    let mut prev = u.values.norm();
    for _ in 0..10 {
        u = solve_burgers(&u, 0.05, 1.0, &opts).unwrap();
        let now = u.values.norm();
        assert!(now <= prev * (1.0 + 1e-12), "norm grew from {prev} to {now}");
        prev = now;
    }
}

#[test]
fn taylor_green_decay() {
    let rel = taylor_green_error(64, 0.01, 1.0);
    assert!(rel < 1e-4, "relative error {rel}");
}

#[test]
fn unforced_enstrophy_never_grows() {
    let g = Grid::torus(32).unwrap();
    let w0 = sample_grf(&MeasureSpec::ns_vorticity_ic(), &g, &mut Rng::new(23)).unwrap();
    let opts = NsOptions { dt: 1e-3, forcing: false };
    let traj = solve_navier_stokes(&w0, 2.0, 1e-3, 0.1, &opts).unwrap();
    let mut prev = w0.values.norm();
    for (r, w) in traj.iter().enumerate() {
        let now = w.values.norm();
        assert!(now <= prev * (1.0 + 1e-8), "record {r}: {prev} -> {now}");
        prev = now;
    }
}

#[test]
fn dataset_generation_is_deterministic() {
    let mut spec = DataSpec::new(Problem::Burgers, 3, 256, 7);
    spec.solver.dt = 1e-3;
    let a = build_dataset(&spec).unwrap();
    let b = build_dataset(&spec).unwrap();
    assert_eq!(a.inputs.to_le_bytes(), b.inputs.to_le_bytes());
    assert_eq!(a.outputs.to_le_bytes(), b.outputs.to_le_bytes());
    assert_eq!(a.len(), 3);
}

#[test]
fn trajectory_dataset_splits_time_window() {
    let mut spec = DataSpec::new(Problem::NsTrajectory, 1, 16, 1);
    spec.solver.dt = 1e-2;
    spec.solver.t_end = 4.0;
    spec.solver.t_in = 3.0;
    let d = build_dataset(&spec).unwrap();
    assert_eq!(d.inputs.shape(), &[1, 16, 16, 3]);
    assert_eq!(d.outputs.shape(), &[1, 16, 16, 1]);
}

#[test]
#[ignore = "full-size Burgers generation: 1000 samples on 8192 points"]
fn burgers_full_size_dataset() {
    let d = build_dataset(&DataSpec::new(Problem::Burgers, 1000, 8192, 0)).unwrap();
    assert_eq!(d.len(), 1000);
    assert_eq!(d.downsample(32).unwrap().grid.sizes, vec![256]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn downsampling_composes(m in 1usize..5, a in 1usize..4, b in 1usize..4, periodic in any::<bool>()) {
        let intervals = m * a * b;
        let g = if periodic {
            Grid::periodic_1d(intervals, 1.0).unwrap()
        } else {
            Grid::unit_interval(intervals + 1).unwrap()
        };
        let n = g.sizes[0];
        let f = FieldSample::scalar(g, (0..n).map(|i| i as f64).collect()).unwrap();
        let twice = downsample(&downsample(&f, &[a]).unwrap(), &[b]).unwrap();
        let once = downsample(&f, &[a * b]).unwrap();
        prop_assert_eq!(twice, once);
    }
}
