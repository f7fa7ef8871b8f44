use crate::error::{Error, Result};

use super::{FieldSample, Grid};

/// Relative residual target for the conjugate-gradient solve.
pub const CG_TOLERANCE: f64 = 1e-12;

/// Conservative five-point operator `-div(a grad u)` on the interior nodes of a square grid.
///
/// Face coefficients are harmonic means of the two adjacent nodal values.
/// Boundary nodes carry `u = 0` and are not unknowns.
pub struct DarcyOperator {
    s: usize,
    inv_h2: f64,
    /// Face coefficients: `east[i][j]` joins `(i, j)` and `(i, j + 1)`, `south[i][j]` joins `(i, j)` and `(i + 1, j)`.
    east: Vec<f64>,
    south: Vec<f64>,
    diag: Vec<f64>,
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

impl DarcyOperator {
    pub fn new(a: &FieldSample) -> Result<Self> {
        let g = &a.grid;
        let square = g.dim() == 2
            && g.sizes[0] == g.sizes[1]
            && !g.periodic[0]
            && !g.periodic[1]
            && g.extents.iter().all(|&l| (l - 1.0).abs() < 1e-12);
        if !square || a.channels() != 1 || g.sizes[0] < 3 {
            return Err(Error::Config(format!(
                "Darcy solve needs a single-channel field on a closed unit-square grid with s >= 3, got {:?}",
                g.sizes
            )));
        }
        if let Some(bad) = a.data().iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::Domain(format!("Darcy coefficient must be positive, found {bad}")));
        }
        let s = g.sizes[0];
        let h = g.spacing(0);
        let v = a.data();
        let mut east = vec![0.0; s * s];
        let mut south = vec![0.0; s * s];
        for i in 0..s {
            for j in 0..s {
                if j + 1 < s {
                    east[i * s + j] = harmonic(v[i * s + j], v[i * s + j + 1]);
                }
                if i + 1 < s {
                    south[i * s + j] = harmonic(v[i * s + j], v[(i + 1) * s + j]);
                }
            }
        }
        let mut diag = vec![0.0; s * s];
        for i in 1..s - 1 {
            for j in 1..s - 1 {
                let p = i * s + j;
                diag[p] = east[p] + east[p - 1] + south[p] + south[p - s];
            }
        }
        Ok(Self {
            s,
            inv_h2: 1.0 / (h * h),
            east,
            south,
            diag,
        })
    }

    pub fn size(&self) -> usize {
        self.s
    }

    /// `y = A u` on interior nodes; `u` holds the full grid with zero boundary.
    pub fn apply(&self, u: &[f64], y: &mut [f64]) {
        let s = self.s;
        y.fill(0.0);
        for i in 1..s - 1 {
            for j in 1..s - 1 {
                let p = i * s + j;
                let flux = self.diag[p] * u[p]
                    - self.east[p] * u[p + 1]
                    - self.east[p - 1] * u[p - 1]
                    - self.south[p] * u[p + s]
                    - self.south[p - s] * u[p - s];
                y[p] = flux * self.inv_h2;
            }
        }
    }

    /// Jacobi-preconditioned conjugate gradients for `A u = f` with constant `f`.
    pub fn solve(&self, f: f64, max_iter: usize) -> Result<Vec<f64>> {
        let s = self.s;
        let n = s * s;
        let interior = |p: usize| {
            let (i, j) = (p / s, p % s);
            i > 0 && j > 0 && i < s - 1 && j < s - 1
        };
        let mut b = vec![0.0; n];
        for (p, x) in b.iter_mut().enumerate() {
            if interior(p) {
                *x = f;
            }
        }
        let bnorm = norm(&b);
        let mut u = vec![0.0; n];
        if bnorm == 0.0 {
            return Ok(u);
        }
        let minv: Vec<f64> = self
            .diag
            .iter()
            .enumerate()
            .map(|(p, &d)| if interior(p) { 1.0 / (d * self.inv_h2) } else { 0.0 })
            .collect();
        let mut r = b.clone();
        let mut z: Vec<f64> = r.iter().zip(&minv).map(|(a, m)| a * m).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz = dot(&r, &z);
        for _ in 0..max_iter {
            self.apply(&p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            for k in 0..n {
                u[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            if norm(&r) <= CG_TOLERANCE * bnorm {
                return Ok(u);
            }
            for k in 0..n {
                z[k] = r[k] * minv[k];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        Err(Error::Solver(format!(
            "conjugate gradients did not converge in {max_iter} iterations, relative residual {:.3e}",
            norm(&r) / bnorm
        )))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `-div(a grad u) = f` on the unit square with `u = 0` on the boundary.
pub fn solve_darcy_fdm(a: &FieldSample, f: f64) -> Result<FieldSample> {
    let op = DarcyOperator::new(a)?;
    let s = op.size();
    let u = op.solve(f, 50 * s * s)?;
    FieldSample::scalar(Grid::unit_square(s)?, u)
}
