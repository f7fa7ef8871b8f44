use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fourier::{signed_index, Lines};
use super::FieldSample;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurgersOptions {
    pub dt: f64,
    /// When false only the viscous part is advanced.
    #[serde(default = "yes")]
    pub nonlinear: bool,
}

fn yes() -> bool {
    true
}

impl Default for BurgersOptions {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            nonlinear: true,
        }
    }
}

/// Advances `u_t + (u^2/2)_x = nu u_xx` on a periodic interval to `t_end`.
///
/// Each step multiplies by the exact heat factor `exp(-nu k^2 dt)` in Fourier
/// space, then takes a forward-Euler step of `-(u^2/2)_x` evaluated
/// spectrally with the 2/3 dealiasing rule.
pub fn solve_burgers(u0: &FieldSample, t_end: f64, nu: f64, opts: &BurgersOptions) -> Result<FieldSample> {
    let g = &u0.grid;
    if g.dim() != 1 || !g.periodic[0] || u0.channels() != 1 {
        return Err(Error::Config("Burgers solve needs a single-channel field on a periodic 1-D grid".into()));
    }
    if !(nu > 0.0) || !(opts.dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::Config(format!(
            "Burgers solve needs nu > 0, dt > 0, t_end >= 0 (got {nu}, {}, {t_end})",
            opts.dt
        )));
    }
    let s = g.sizes[0];
    let steps = (t_end / opts.dt).round().max(if t_end > 0.0 { 1.0 } else { 0.0 }) as usize;
    if steps == 0 {
        return Ok(u0.clone());
    }
    let dt = t_end / steps as f64;
    let w0 = 2.0 * std::f64::consts::PI / g.extents[0];
    let kk: Vec<f64> = (0..s).map(|i| w0 * signed_index(i, s) as f64).collect();
    let cutoff = s as f64 / 3.0;
    let heat: Vec<f64> = kk.iter().map(|k| (-nu * k * k * dt).exp()).collect();
    // -i k / 2 on retained modes, zero on the dealiased band.
    let flux: Vec<Complex64> = (0..s)
        .map(|i| {
            if (signed_index(i, s).abs() as f64) < cutoff {
                Complex64::new(0.0, -0.5 * kk[i])
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();

    let mut fft = Lines::new(s);
    let mut uh: Vec<Complex64> = u0.data().iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft.forward(&mut uh);
    let mut work = vec![Complex64::new(0.0, 0.0); s];
    for step in 0..steps {
        for (u, h) in uh.iter_mut().zip(&heat) {
            *u *= h;
        }
        if opts.nonlinear {
            work.copy_from_slice(&uh);
            fft.inverse(&mut work);
            for z in work.iter_mut() {
                *z = Complex64::new(z.re * z.re, 0.0);
            }
            fft.forward(&mut work);
            for ((u, w), f) in uh.iter_mut().zip(&work).zip(&flux) {
                *u += dt * f * w;
            }
        }
        if step % 64 == 63 && uh.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Solver(format!("Burgers solution blew up at step {}", step + 1)));
        }
    }
    fft.inverse(&mut uh);
    let u: Vec<f64> = uh.iter().map(|z| z.re).collect();
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::Solver(format!("Burgers solution blew up by step {steps}")));
    }
    FieldSample::scalar(g.clone(), u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::Grid;

    #[test]
    fn zero_stays_zero() {
        let g = Grid::periodic_1d(64, 2.0 * std::f64::consts::PI).unwrap();
        let u0 = FieldSample::scalar(g, vec![0.0; 64]).unwrap();
        let u = solve_burgers(&u0, 0.5, 0.1, &BurgersOptions::default()).unwrap();
        assert!(u.data().iter().all(|&x| x == 0.0));
    }
}
