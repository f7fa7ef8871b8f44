//! Seeded random streams and Gaussian random field samplers.
//!
//! Fields are drawn from `N(0, C)` with `C = c (L + tau^2 I)^(-alpha)` by a
//! Karhunen-Loeve sum over every eigenfunction of `L` the grid resolves:
//! sines (Dirichlet), cosines (Neumann) or Fourier modes (periodic).

use std::f64::consts::PI;

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::{FieldSample, Grid};
use crate::tensor::Tensor;

/// Reproducible random stream identified by `(seed, stream)`.
#[derive(Clone, Debug)]
pub struct Rng {
    inner: ChaCha8Rng,
    seed: u64,
    stream: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner, seed, stream }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Independent stream sharing this seed.
    pub fn fork(&self, stream: u64) -> Rng {
        Rng::with_stream(self.seed, stream)
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Fisher-Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i + 1);
            p.swap(i, j);
        }
        p
    }

    /// `k` distinct indices from `0..n`, in sampled order.
    pub fn sample_without_replacement(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot draw {k} distinct items from {n}");
        let mut p: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            p.swap(i, j);
        }
        p.truncate(k);
        p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    PoissonSource,
    DarcyCoeff,
    BurgersIc,
    NsVorticityIc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Dirichlet,
    Neumann,
    Periodic,
}

/// Gaussian measure `N(0, scale * (L + shift I)^(-alpha))`, optionally pushed through a threshold map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    pub kind: MeasureKind,
    pub boundary: Boundary,
    /// Physical side length of the domain along every axis.
    pub length: f64,
    pub scale: f64,
    pub shift: f64,
    pub alpha: f64,
    /// Drops the constant eigenfunction so every draw has zero mean.
    #[serde(default)]
    pub mean_zero: bool,
    /// Values `(upper, lower)` for `x >= 0` and `x < 0`.
    #[serde(default)]
    pub threshold: Option<(f64, f64)>,
}

impl MeasureSpec {
    /// `(L + I)^(-2)` with Dirichlet `L` on `(0, 1)`.
    pub fn poisson_source() -> Self {
        Self {
            kind: MeasureKind::PoissonSource,
            boundary: Boundary::Dirichlet,
            length: 1.0,
            scale: 1.0,
            shift: 1.0,
            alpha: 2.0,
            mean_zero: false,
            threshold: None,
        }
    }

    /// Threshold of `N(0, (-Laplacian + 9 I)^(-2))` with zero Neumann data on the unit square, mean removed.
    pub fn darcy_coeff() -> Self {
        Self {
            kind: MeasureKind::DarcyCoeff,
            boundary: Boundary::Neumann,
            length: 1.0,
            scale: 1.0,
            shift: 9.0,
            alpha: 2.0,
            mean_zero: true,
            threshold: Some((12.0, 3.0)),
        }
    }

    /// `625 (-d^2/dx^2 + 25 I)^(-2)` on the periodic interval `(0, 2 pi)`.
    pub fn burgers_ic() -> Self {
        Self {
            kind: MeasureKind::BurgersIc,
            boundary: Boundary::Periodic,
            length: 2.0 * PI,
            scale: 625.0,
            shift: 25.0,
            alpha: 2.0,
            mean_zero: false,
            threshold: None,
        }
    }

    /// `7^(3/2) (-Laplacian + 49 I)^(-2.5)` on the unit torus, mean removed.
    pub fn ns_vorticity_ic() -> Self {
        Self {
            kind: MeasureKind::NsVorticityIc,
            boundary: Boundary::Periodic,
            length: 1.0,
            scale: 7f64.powf(1.5),
            shift: 49.0,
            alpha: 2.5,
            mean_zero: true,
            threshold: None,
        }
    }

    pub fn default_for(kind: MeasureKind) -> Self {
        match kind {
            MeasureKind::PoissonSource => Self::poisson_source(),
            MeasureKind::DarcyCoeff => Self::darcy_coeff(),
            MeasureKind::BurgersIc => Self::burgers_ic(),
            MeasureKind::NsVorticityIc => Self::ns_vorticity_ic(),
        }
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            MeasureKind::PoissonSource | MeasureKind::BurgersIc => 1,
            MeasureKind::DarcyCoeff | MeasureKind::NsVorticityIc => 2,
        }
    }

    /// Eigenvalue `scale * (rho + shift)^(-alpha)` for Laplacian eigenvalue `rho`.
    pub fn eigenvalue(&self, rho: f64) -> f64 {
        self.scale * (rho + self.shift).powf(-self.alpha)
    }

    /// Laplacian eigenvalue of the mode with (unsigned) integer wavenumbers `k`.
    pub fn laplacian_eigenvalue(&self, k: &[i64]) -> f64 {
        let w = match self.boundary {
            Boundary::Dirichlet | Boundary::Neumann => PI / self.length,
            Boundary::Periodic => 2.0 * PI / self.length,
        };
        k.iter().map(|&ki| (w * ki as f64).powi(2)).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim() as f64;
        if !(self.alpha > d / 2.0) {
            return Err(Error::Config(format!(
                "measure exponent alpha = {} must exceed d/2 = {} for function-valued samples",
                self.alpha,
                d / 2.0
            )));
        }
        if !(self.scale > 0.0 && self.shift >= 0.0 && self.length > 0.0) {
            return Err(Error::Config("measure scale and length must be positive, shift nonnegative".into()));
        }
        if self.threshold.is_some() && self.kind != MeasureKind::DarcyCoeff {
            return Err(Error::Config("threshold map applies only to darcy_coeff".into()));
        }
        let expected = match self.kind {
            MeasureKind::PoissonSource => Boundary::Dirichlet,
            MeasureKind::DarcyCoeff => Boundary::Neumann,
            MeasureKind::BurgersIc | MeasureKind::NsVorticityIc => Boundary::Periodic,
        };
        if self.boundary != expected {
            return Err(Error::Config(format!(
                "{:?} requires {:?} boundary, got {:?}",
                self.kind, expected, self.boundary
            )));
        }
        Ok(())
    }

    fn check_grid(&self, grid: &Grid) -> Result<()> {
        let periodic = self.boundary == Boundary::Periodic;
        let ok = grid.dim() == self.dim()
            && grid.periodic.iter().all(|&p| p == periodic)
            && grid.extents.iter().all(|&l| (l - self.length).abs() < 1e-12 * self.length);
        if !ok {
            return Err(Error::Config(format!(
                "grid {:?} (extents {:?}, periodic {:?}) is incompatible with {:?} on a domain of length {}",
                grid.sizes, grid.extents, grid.periodic, self.kind, self.length
            )));
        }
        Ok(())
    }
}

/// One draw of the measure on `grid`.
pub fn sample_grf(spec: &MeasureSpec, grid: &Grid, rng: &mut Rng) -> Result<FieldSample> {
    spec.validate()?;
    spec.check_grid(grid)?;
    let mut values = match spec.boundary {
        Boundary::Dirichlet => sample_dirichlet_1d(spec, grid, rng),
        Boundary::Neumann => sample_neumann_2d(spec, grid, rng)?,
        Boundary::Periodic => sample_periodic(spec, grid, rng)?,
    };
    if let Some((hi, lo)) = spec.threshold {
        for x in values.iter_mut() {
            *x = if *x >= 0.0 { hi } else { lo };
        }
    }
    FieldSample::scalar(grid.clone(), values)
}

/// Sine series `sum_k sqrt(lambda_k) xi_k sqrt(2/L) sin(pi k x / L)`, `k = 1..s-2`.
fn sample_dirichlet_1d(spec: &MeasureSpec, grid: &Grid, rng: &mut Rng) -> Vec<f64> {
    let s = grid.sizes[0];
    let l = spec.length;
    let xs = grid.axis_coords(0);
    let norm = (2.0 / l).sqrt();
    let coef: Vec<f64> = (1..s.saturating_sub(1))
        .map(|k| spec.eigenvalue(spec.laplacian_eigenvalue(&[k as i64])).sqrt() * rng.normal())
        .collect();
    let mut out = vec![0.0; s];
    for (i, &x) in xs.iter().enumerate() {
        if i == 0 || i == s - 1 {
            continue;
        }
        out[i] = coef
            .iter()
            .enumerate()
            .map(|(j, c)| c * norm * (PI * (j + 1) as f64 * x / l).sin())
            .sum();
    }
    out
}

/// Cosine-product series on the square; modes `k_j = 0..s_j-1`, basis normalized on `[0, L]^2`.
fn sample_neumann_2d(spec: &MeasureSpec, grid: &Grid, rng: &mut Rng) -> Result<Vec<f64>> {
    let (s0, s1) = (grid.sizes[0], grid.sizes[1]);
    let l = spec.length;
    let basis = |s: usize, xs: &[f64]| -> Tensor {
        Tensor::from_fn(&[s, s], |p| {
            let (i, k) = (p / s, p % s);
            let n = if k == 0 { (1.0 / l).sqrt() } else { (2.0 / l).sqrt() };
            n * (PI * k as f64 * xs[i] / l).cos()
        })
    };
    let c0 = basis(s0, &grid.axis_coords(0));
    let c1 = basis(s1, &grid.axis_coords(1));
    let xi = Tensor::from_fn(&[s0, s1], |p| {
        let (k0, k1) = (p / s1, p % s1);
        if p == 0 && spec.mean_zero {
            return 0.0;
        }
        spec.eigenvalue(spec.laplacian_eigenvalue(&[k0 as i64, k1 as i64])).sqrt() * rng.normal()
    });
    Ok(c0.matmul(&xi)?.matmul(&c1.transpose()?)?.into_data())
}

/// Real Fourier series via Hermitian coefficients; Nyquist modes are excluded.
fn sample_periodic(spec: &MeasureSpec, grid: &Grid, rng: &mut Rng) -> Result<Vec<f64>> {
    let d = grid.dim();
    let sizes = &grid.sizes;
    let n: usize = sizes.iter().product();
    let l = spec.length;
    let basis_norm = l.powf(-(d as f64) / 2.0);
    let mut coef = vec![0.0; 2 * n];
    let signed = |i: usize, s: usize| -> i64 {
        if 2 * i <= s {
            i as i64
        } else {
            i as i64 - s as i64
        }
    };
    let flat_of = |k: &[i64]| -> usize {
        let mut f = 0;
        for j in 0..d {
            f = f * sizes[j] + k[j].rem_euclid(sizes[j] as i64) as usize;
        }
        f
    };
    let mut idx = vec![0usize; d];
    for flat in 0..n {
        let mut rem = flat;
        for j in (0..d).rev() {
            idx[j] = rem % sizes[j];
            rem /= sizes[j];
        }
        let k: Vec<i64> = (0..d).map(|j| signed(idx[j], sizes[j])).collect();
        let nyquist = (0..d).any(|j| 2 * k[j].unsigned_abs() as usize >= sizes[j] && sizes[j] > 1);
        if nyquist {
            continue;
        }
        // Canonical representative of the pair {k, -k}: first nonzero component positive.
        let first = k.iter().find(|&&x| x != 0).copied();
        match first {
            None => {
                if !spec.mean_zero {
                    let sd = spec.eigenvalue(0.0).sqrt();
                    coef[2 * flat] = sd * basis_norm * rng.normal();
                }
            }
            Some(f) if f > 0 => {
                let sd = spec.eigenvalue(spec.laplacian_eigenvalue(&k)).sqrt();
                let (a, b) = (rng.normal(), rng.normal());
                let c = sd * basis_norm / std::f64::consts::SQRT_2;
                coef[2 * flat] = c * a;
                coef[2 * flat + 1] = -c * b;
                let neg: Vec<i64> = k.iter().map(|x| -x).collect();
                let nf = flat_of(&neg);
                coef[2 * nf] = c * a;
                coef[2 * nf + 1] = c * b;
            }
            Some(_) => {}
        }
    }
    let mut shape = sizes.clone();
    shape.push(2);
    let axes: Vec<usize> = (0..d).collect();
    let field = Tensor::new(&shape, coef)?.ifft(&axes)?.scale(n as f64);
    Ok(field.real_part()?.into_data())
}

/// `a + level * sup|a| * xi` with i.i.d. standard normal `xi` per grid value.
pub fn add_noise(a: &FieldSample, level: f64, rng: &mut Rng) -> Result<FieldSample> {
    if !(level >= 0.0) {
        return Err(Error::Config(format!("noise level must be nonnegative, got {level}")));
    }
    let amp = level * a.values.max_abs();
    let mut out = a.clone();
    if amp == 0.0 {
        return Ok(out);
    }
    for x in out.values.data_mut() {
        *x += amp * rng.normal();
    }
    Ok(out)
}
