use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Uniform tensor-product grid.
///
/// Endpoint axes hold `s` points `i * L / (s - 1)`; periodic axes hold `s`
/// points `i * L / s` with no duplicated endpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub sizes: Vec<usize>,
    pub extents: Vec<f64>,
    pub periodic: Vec<bool>,
}

impl Grid {
    pub fn new(sizes: &[usize], extents: &[f64], periodic: &[bool]) -> Result<Self> {
        if sizes.is_empty() || sizes.len() != extents.len() || sizes.len() != periodic.len() {
            return Err(Error::Config(format!(
                "grid description has mismatched axis counts: sizes {:?}, extents {:?}, periodic {:?}",
                sizes, extents, periodic
            )));
        }
        for (j, (&s, &p)) in sizes.iter().zip(periodic).enumerate() {
            let min = if p { 1 } else { 2 };
            if s < min {
                return Err(Error::Config(format!("grid axis {j} needs at least {min} points, got {s}")));
            }
        }
        if extents.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Config(format!("grid extents must be positive, got {:?}", extents)));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            extents: extents.to_vec(),
            periodic: periodic.to_vec(),
        })
    }

    /// `s` points on `[0, 1]` including both endpoints.
    pub fn unit_interval(s: usize) -> Result<Self> {
        Self::new(&[s], &[1.0], &[false])
    }

    /// `s x s` points on `[0, 1]^2` including the boundary.
    pub fn unit_square(s: usize) -> Result<Self> {
        Self::new(&[s, s], &[1.0, 1.0], &[false, false])
    }

    /// `s` periodic points on `[0, length)`.
    pub fn periodic_1d(s: usize, length: f64) -> Result<Self> {
        Self::new(&[s], &[length], &[true])
    }

    /// `s x s` periodic points on the unit torus.
    pub fn torus(s: usize) -> Result<Self> {
        Self::new(&[s, s], &[1.0, 1.0], &[true, true])
    }

    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    pub fn num_points(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        let s = self.sizes[axis] as f64;
        if self.periodic[axis] {
            self.extents[axis] / s
        } else {
            self.extents[axis] / (s - 1.0)
        }
    }

    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        let h = self.spacing(axis);
        (0..self.sizes[axis]).map(|i| i as f64 * h).collect()
    }

    /// Coordinates of every point, shape `(num_points, d)` in row-major point order.
    pub fn coords(&self) -> Tensor {
        let d = self.dim();
        let axes: Vec<Vec<f64>> = (0..d).map(|j| self.axis_coords(j)).collect();
        let n = self.num_points();
        let mut data = Vec::with_capacity(n * d);
        let mut idx = vec![0usize; d];
        for _ in 0..n {
            for j in 0..d {
                data.push(axes[j][idx[j]]);
            }
            for j in (0..d).rev() {
                idx[j] += 1;
                if idx[j] < self.sizes[j] {
                    break;
                }
                idx[j] = 0;
            }
        }
        Tensor::new(&[n, d], data).expect("coordinate count")
    }

    /// Grid keeping every `factor[j]`-th point along each axis.
    pub fn downsampled(&self, factor: &[usize]) -> Result<Grid> {
        if factor.len() != self.dim() {
            return Err(Error::Config(format!(
                "downsample factor {:?} does not match grid rank {}",
                factor,
                self.dim()
            )));
        }
        let mut sizes = Vec::with_capacity(self.dim());
        for j in 0..self.dim() {
            let (s, f) = (self.sizes[j], factor[j]);
            if f == 0 {
                return Err(Error::Config("downsample factor must be positive".into()));
            }
            if self.periodic[j] {
                if s % f != 0 {
                    return Err(Error::Config(format!(
                        "downsample factor {f} does not divide periodic axis {j} of size {s}"
                    )));
                }
                sizes.push(s / f);
            } else {
                if (s - 1) % f != 0 {
                    return Err(Error::Config(format!(
                        "downsample factor {f} does not divide {} intervals on axis {j}",
                        s - 1
                    )));
                }
                sizes.push((s - 1) / f + 1);
            }
        }
        Grid::new(&sizes, &self.extents, &self.periodic)
    }
}

/// Function values on a grid, `values` shaped `(s_1, ..., s_d, channels)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSample {
    pub grid: Grid,
    pub values: Tensor,
}

impl FieldSample {
    pub fn new(grid: Grid, values: Tensor) -> Result<Self> {
        let d = grid.dim();
        let ok = values.ndim() == d + 1 && values.shape()[..d] == grid.sizes[..];
        if !ok {
            return Err(Error::shape("field", values.shape(), &grid.sizes));
        }
        Ok(Self { grid, values })
    }

    /// Single-channel field from point values in row-major grid order.
    pub fn scalar(grid: Grid, data: Vec<f64>) -> Result<Self> {
        let mut shape = grid.sizes.clone();
        shape.push(1);
        let values = Tensor::new(&shape, data)?;
        Self::new(grid, values)
    }

    pub fn channels(&self) -> usize {
        *self.values.shape().last().expect("rank >= 1")
    }

    pub fn data(&self) -> &[f64] {
        self.values.data()
    }

    pub fn is_finite(&self) -> bool {
        self.values.all_finite()
    }
}
