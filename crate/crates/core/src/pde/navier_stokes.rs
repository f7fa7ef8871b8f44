use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fourier::{signed_index, Square};
use super::FieldSample;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NsOptions {
    pub dt: f64,
    /// Applies `0.1 (sin(2 pi (x + y)) + cos(2 pi (x + y)))` when true.
    #[serde(default = "yes")]
    pub forcing: bool,
}

fn yes() -> bool {
    true
}

impl Default for NsOptions {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            forcing: true,
        }
    }
}

/// Forcing term on the unit torus.
pub fn forcing(x: f64, y: f64) -> f64 {
    0.1 * ((2.0 * PI * (x + y)).sin() + (2.0 * PI * (x + y)).cos())
}

struct Stepper {
    s: usize,
    fft: Square,
    kx: Vec<f64>,
    ky: Vec<f64>,
    lap: Vec<f64>,
    mask: Vec<bool>,
    force: Vec<Complex64>,
    bufs: [Vec<Complex64>; 4],
}

impl Stepper {
    fn new(s: usize, force: bool) -> Self {
        let n = s * s;
        let mut kx = vec![0.0; n];
        let mut ky = vec![0.0; n];
        let mut lap = vec![0.0; n];
        let mut mask = vec![false; n];
        let edge = 2.0 / 3.0 * (s as f64 / 2.0);
        for i in 0..s {
            for j in 0..s {
                let p = i * s + j;
                let (a, b) = (signed_index(i, s), signed_index(j, s));
                // Nyquist rows carry no derivative.
                let nyq = |k: i64| s % 2 == 0 && k.unsigned_abs() as usize * 2 == s;
                kx[p] = if nyq(a) { 0.0 } else { 2.0 * PI * a as f64 };
                ky[p] = if nyq(b) { 0.0 } else { 2.0 * PI * b as f64 };
                lap[p] = 4.0 * PI * PI * ((a * a + b * b) as f64);
                mask[p] = (a.abs() as f64) <= edge && (b.abs() as f64) <= edge;
            }
        }
        let mut fft = Square::new(s);
        let mut f = vec![Complex64::new(0.0, 0.0); n];
        if force {
            let h = 1.0 / s as f64;
            for i in 0..s {
                for j in 0..s {
                    f[i * s + j] = Complex64::new(forcing(i as f64 * h, j as f64 * h), 0.0);
                }
            }
            fft.forward(&mut f);
        }
        let z = Complex64::new(0.0, 0.0);
        Self {
            s,
            fft,
            kx,
            ky,
            lap,
            mask,
            force: f,
            bufs: [vec![z; n], vec![z; n], vec![z; n], vec![z; n]],
        }
    }

    /// Fourier coefficients of `-(u . grad w) + f` with `u = (psi_y, -psi_x)` and `-Lap psi = w`.
    fn rhs(&mut self, wh: &[Complex64], out: &mut [Complex64]) {
        let n = self.s * self.s;
        let i = Complex64::new(0.0, 1.0);
        let [u, v, wx, wy] = &mut self.bufs;
        for p in 0..n {
            let psi = if self.lap[p] > 0.0 { wh[p] / self.lap[p] } else { Complex64::new(0.0, 0.0) };
            u[p] = i * self.ky[p] * psi;
            v[p] = -i * self.kx[p] * psi;
            wx[p] = i * self.kx[p] * wh[p];
            wy[p] = i * self.ky[p] * wh[p];
        }
        for b in [&mut *u, &mut *v, &mut *wx, &mut *wy] {
            self.fft.inverse(b);
        }
        for p in 0..n {
            out[p] = Complex64::new(-(u[p].re * wx[p].re + v[p].re * wy[p].re), 0.0);
        }
        self.fft.forward(out);
        for p in 0..n {
            out[p] = if self.mask[p] { out[p] } else { Complex64::new(0.0, 0.0) } + self.force[p];
        }
    }
}

/// Vorticity on the unit torus sampled every `record_every` time units up to `t_end`.
///
/// Viscosity is treated by Crank-Nicolson and the transport and forcing
/// terms by Heun's method, all in Fourier space with 2/3 dealiasing.
pub fn solve_navier_stokes(
    w0: &FieldSample,
    t_end: f64,
    nu: f64,
    record_every: f64,
    opts: &NsOptions,
) -> Result<Vec<FieldSample>> {
    let g = &w0.grid;
    let ok = g.dim() == 2
        && g.sizes[0] == g.sizes[1]
        && g.periodic.iter().all(|&p| p)
        && g.extents.iter().all(|&l| (l - 1.0).abs() < 1e-12)
        && w0.channels() == 1;
    if !ok {
        return Err(Error::Config("Navier-Stokes solve needs a single-channel field on the square unit torus".into()));
    }
    if !(nu > 0.0 && opts.dt > 0.0 && record_every > 0.0 && t_end >= 0.0) {
        return Err(Error::Config(format!(
            "Navier-Stokes needs nu, dt, record_every > 0 (got {nu}, {}, {record_every})",
            opts.dt
        )));
    }
    let steps_per_record = (record_every / opts.dt).round() as usize;
    if steps_per_record == 0 || ((steps_per_record as f64) * opts.dt - record_every).abs() > 1e-9 * record_every {
        return Err(Error::Config(format!(
            "record interval {record_every} is not a whole number of steps of {}",
            opts.dt
        )));
    }
    let records = (t_end / record_every).round() as usize;
    if ((records as f64) * record_every - t_end).abs() > 1e-9 * t_end.max(1.0) {
        return Err(Error::Config(format!("t_end {t_end} is not a multiple of the record interval {record_every}")));
    }
    let mean = w0.values.mean();
    let scale = w0.values.max_abs().max(1.0);
    if mean.abs() > 1e-10 * scale {
        return Err(Error::Domain(format!("initial vorticity must have zero mean, found mean {mean:.3e}")));
    }

    let s = g.sizes[0];
    let n = s * s;
    let dt = opts.dt;
    let mut st = Stepper::new(s, opts.forcing);
    let mut wh: Vec<Complex64> = w0.data().iter().map(|&x| Complex64::new(x, 0.0)).collect();
    st.fft.forward(&mut wh);
    wh[0] = Complex64::new(0.0, 0.0);
    let plus: Vec<f64> = st.lap.iter().map(|l| 1.0 - 0.5 * nu * dt * l).collect();
    let minus: Vec<f64> = st.lap.iter().map(|l| 1.0 / (1.0 + 0.5 * nu * dt * l)).collect();
    let z = Complex64::new(0.0, 0.0);
    let (mut f0, mut f1, mut pred) = (vec![z; n], vec![z; n], vec![z; n]);
    let mut out = Vec::with_capacity(records);
    for r in 0..records {
        for _ in 0..steps_per_record {
            st.rhs(&wh, &mut f0);
            for p in 0..n {
                pred[p] = (plus[p] * wh[p] + dt * f0[p]) * minus[p];
            }
            st.rhs(&pred, &mut f1);
            for p in 0..n {
                wh[p] = (plus[p] * wh[p] + 0.5 * dt * (f0[p] + f1[p])) * minus[p];
            }
        }
        let mut phys = wh.clone();
        st.fft.inverse(&mut phys);
        let w: Vec<f64> = phys.iter().map(|c| c.re).collect();
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::Solver(format!(
                "Navier-Stokes solution blew up before t = {}",
                (r + 1) as f64 * record_every
            )));
        }
        out.push(FieldSample::scalar(g.clone(), w)?);
    }
    Ok(out)
}
