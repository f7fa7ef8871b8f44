use crate::error::{Error, Result};

use super::FieldSample;

/// Green's function of `-u'' = f` on `(0, 1)` with zero boundary values.
pub fn green(x: f64, y: f64) -> f64 {
    0.5 * (x + y - (y - x).abs()) - x * y
}

/// Trapezoid-rule weights for `s` equispaced points with spacing `h`, endpoints included.
pub fn trapezoid_weights(s: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; s];
    if s > 0 {
        w[0] = 0.5 * h;
        w[s - 1] = 0.5 * h;
    }
    w
}

/// `u(x_i) = sum_j w_j G(x_i, y_j) f(y_j)` with trapezoid weights on the field's grid.
pub fn solve_poisson_green(f: &FieldSample) -> Result<FieldSample> {
    let g = &f.grid;
    if g.dim() != 1 || g.periodic[0] || (g.extents[0] - 1.0).abs() > 1e-12 || f.channels() != 1 {
        return Err(Error::Config(format!(
            "Poisson solve needs a single-channel field on the closed unit interval, got sizes {:?}, extents {:?}",
            g.sizes, g.extents
        )));
    }
    let xs = g.axis_coords(0);
    let w = trapezoid_weights(xs.len(), g.spacing(0));
    let fw: Vec<f64> = f.data().iter().zip(&w).map(|(a, b)| a * b).collect();
    let u = xs
        .iter()
        .map(|&x| xs.iter().zip(&fw).map(|(&y, &v)| green(x, y) * v).sum())
        .collect();
    FieldSample::scalar(g.clone(), u)
}
