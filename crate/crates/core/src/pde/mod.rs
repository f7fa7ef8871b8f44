//! Reference solvers for the four test problems and dataset assembly.

mod burgers;
mod darcy;
mod fourier;
mod grid;
mod navier_stokes;
mod poisson;

use serde::{Deserialize, Serialize};

pub use burgers::{solve_burgers, BurgersOptions};
pub use darcy::{solve_darcy_fdm, DarcyOperator, CG_TOLERANCE};
pub use grid::{FieldSample, Grid};
pub use navier_stokes::{forcing, solve_navier_stokes, NsOptions};
pub use poisson::{green, solve_poisson_green, trapezoid_weights};

use crate::error::{Error, Result};
use crate::random::{sample_grf, MeasureSpec, Rng};
use crate::tensor::Tensor;

/// Strided subsampling keeping every `factor[j]`-th point along axis `j`.
pub fn downsample(f: &FieldSample, factor: &[usize]) -> Result<FieldSample> {
    let grid = f.grid.downsampled(factor)?;
    let mut values = f.values.clone();
    for (axis, &k) in factor.iter().enumerate() {
        if k == 1 {
            continue;
        }
        let idx: Vec<usize> = (0..grid.sizes[axis]).map(|i| i * k).collect();
        values = values.gather(axis, &idx)?;
    }
    FieldSample::new(grid, values)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    Poisson,
    Darcy,
    Burgers,
    NsOnestep,
    NsTrajectory,
}

impl Problem {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "poisson" => Problem::Poisson,
            "darcy" => Problem::Darcy,
            "burgers" => Problem::Burgers,
            "ns_onestep" => Problem::NsOnestep,
            "ns_trajectory" => Problem::NsTrajectory,
            other => return Err(Error::Config(format!("unknown problem '{other}'"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Problem::Poisson => "poisson",
            Problem::Darcy => "darcy",
            Problem::Burgers => "burgers",
            Problem::NsOnestep => "ns_onestep",
            Problem::NsTrajectory => "ns_trajectory",
        }
    }

    pub fn default_measure(&self) -> MeasureSpec {
        match self {
            Problem::Poisson => MeasureSpec::poisson_source(),
            Problem::Darcy => MeasureSpec::darcy_coeff(),
            Problem::Burgers => MeasureSpec::burgers_ic(),
            Problem::NsOnestep | Problem::NsTrajectory => MeasureSpec::ns_vorticity_ic(),
        }
    }

    pub fn grid(&self, s: usize) -> Result<Grid> {
        match self {
            Problem::Poisson => Grid::unit_interval(s),
            Problem::Darcy => Grid::unit_square(s),
            Problem::Burgers => Grid::periodic_1d(s, 2.0 * std::f64::consts::PI),
            Problem::NsOnestep | Problem::NsTrajectory => Grid::torus(s),
        }
    }
}

/// Solver settings recorded with every dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverParams {
    pub viscosity: f64,
    pub t_end: f64,
    pub dt: f64,
    /// Spacing of recorded vorticity snapshots.
    pub record_every: f64,
    /// Length of the input window for trajectory datasets.
    pub t_in: f64,
    pub forcing: bool,
    /// Constant right-hand side of the Darcy problem.
    pub source: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            viscosity: 0.1,
            t_end: 1.0,
            dt: 1e-4,
            record_every: 1.0,
            t_in: 10.0,
            forcing: true,
            source: 1.0,
        }
    }
}

impl SolverParams {
    pub fn default_for(problem: Problem) -> Self {
        let base = Self::default();
        match problem {
            Problem::NsOnestep => Self {
                viscosity: 1e-3,
                t_end: 1.0,
                ..base
            },
            Problem::NsTrajectory => Self {
                viscosity: 1e-3,
                t_end: 50.0,
                ..base
            },
            _ => base,
        }
    }
}

/// What to generate: `n` pairs drawn on a `resolution` grid, then subsampled by `downsample`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub problem: Problem,
    pub n: usize,
    pub resolution: usize,
    #[serde(default = "one")]
    pub downsample: usize,
    pub seed: u64,
    /// Stream index of the first sample; sample `i` uses stream `first_sample + i`.
    #[serde(default)]
    pub first_sample: u64,
    pub measure: MeasureSpec,
    pub solver: SolverParams,
}

fn one() -> usize {
    1
}

impl DataSpec {
    pub fn new(problem: Problem, n: usize, resolution: usize, seed: u64) -> Self {
        Self {
            problem,
            n,
            resolution,
            downsample: 1,
            seed,
            first_sample: 0,
            measure: problem.default_measure(),
            solver: SolverParams::default_for(problem),
        }
    }
}

/// Provenance of a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub spec: DataSpec,
    /// Grid size after downsampling.
    pub resolution: usize,
    pub input_channels: usize,
    pub output_channels: usize,
}

/// Paired input/output fields on one grid, stacked as `(N, s_1, .., s_d, channels)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub grid: Grid,
    pub inputs: Tensor,
    pub outputs: Tensor,
}

fn stack(fields: &[FieldSample], grid: &Grid, channels: usize) -> Result<Tensor> {
    let mut shape = vec![fields.len()];
    shape.extend_from_slice(&grid.sizes);
    shape.push(channels);
    let mut data = Vec::with_capacity(shape.iter().product());
    for f in fields {
        data.extend_from_slice(f.data());
    }
    Tensor::new(&shape, data)
}

/// Channel-wise concatenation of single-channel snapshots.
fn interleave(snaps: &[FieldSample], grid: &Grid) -> Result<FieldSample> {
    let c = snaps.len();
    let n = grid.num_points();
    let mut data = vec![0.0; n * c];
    for (t, s) in snaps.iter().enumerate() {
        for (p, &v) in s.data().iter().enumerate() {
            data[p * c + t] = v;
        }
    }
    let mut shape = grid.sizes.clone();
    shape.push(c);
    FieldSample::new(grid.clone(), Tensor::new(&shape, data)?)
}

fn tag_sample(e: Error, i: usize) -> Error {
    match e {
        Error::Solver(m) => Error::Solver(format!("sample {i}: {m}")),
        Error::Numeric(m) => Error::Numeric(format!("sample {i}: {m}")),
        Error::Domain(m) => Error::Domain(format!("sample {i}: {m}")),
        other => other,
    }
}

/// Solves one input draw, returning `(input, output)` on the source grid.
pub fn solve_pair(spec: &DataSpec, a: &FieldSample) -> Result<(FieldSample, FieldSample)> {
    let p = &spec.solver;
    match spec.problem {
        Problem::Poisson => Ok((a.clone(), solve_poisson_green(a)?)),
        Problem::Darcy => Ok((a.clone(), solve_darcy_fdm(a, p.source)?)),
        Problem::Burgers => {
            let opts = BurgersOptions {
                dt: p.dt,
                nonlinear: true,
            };
            Ok((a.clone(), solve_burgers(a, p.t_end, p.viscosity, &opts)?))
        }
        Problem::NsOnestep => {
            let opts = NsOptions {
                dt: p.dt,
                forcing: p.forcing,
            };
            let traj = solve_navier_stokes(a, p.t_end, p.viscosity, p.t_end, &opts)?;
            Ok((a.clone(), traj.into_iter().last().expect("one record")))
        }
        Problem::NsTrajectory => {
            let opts = NsOptions {
                dt: p.dt,
                forcing: p.forcing,
            };
            let traj = solve_navier_stokes(a, p.t_end, p.viscosity, p.record_every, &opts)?;
            let k = (p.t_in / p.record_every).round() as usize;
            if k == 0 || k >= traj.len() {
                return Err(Error::Config(format!(
                    "input window {} must cover between 1 and {} records",
                    p.t_in,
                    traj.len().saturating_sub(1)
                )));
            }
            Ok((interleave(&traj[..k], &a.grid)?, interleave(&traj[k..], &a.grid)?))
        }
    }
}

/// Draws `spec.n` inputs from the measure and solves each, sample `i` on stream `first_sample + i`.
pub fn build_dataset(spec: &DataSpec) -> Result<Dataset> {
    spec.measure.validate()?;
    let src = spec.problem.grid(spec.resolution)?;
    let factor = vec![spec.downsample; src.dim()];
    let grid = src.downsampled(&factor)?;
    let mut ins = Vec::with_capacity(spec.n);
    let mut outs = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let mut rng = Rng::with_stream(spec.seed, spec.first_sample + i as u64);
        let a = sample_grf(&spec.measure, &src, &mut rng).map_err(|e| tag_sample(e, i))?;
        let (x, y) = solve_pair(spec, &a).map_err(|e| tag_sample(e, i))?;
        ins.push(downsample(&x, &factor)?);
        outs.push(downsample(&y, &factor)?);
    }
    let (cin, cout) = match spec.problem {
        Problem::NsTrajectory => {
            let p = &spec.solver;
            let k = (p.t_in / p.record_every).round() as usize;
            let total = (p.t_end / p.record_every).round() as usize;
            (k, total.saturating_sub(k))
        }
        _ => (1, 1),
    };
    Ok(Dataset {
        manifest: DatasetManifest {
            spec: spec.clone(),
            resolution: grid.sizes[0],
            input_channels: cin,
            output_channels: cout,
        },
        inputs: stack(&ins, &grid, cin)?,
        outputs: stack(&outs, &grid, cout)?,
        grid,
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_channels(&self) -> usize {
        *self.inputs.shape().last().expect("rank")
    }

    pub fn output_channels(&self) -> usize {
        *self.outputs.shape().last().expect("rank")
    }

    fn field(&self, t: &Tensor, i: usize) -> Result<FieldSample> {
        let sample = t.slice(0, i, 1)?;
        let shape = &t.shape()[1..];
        FieldSample::new(self.grid.clone(), sample.into_reshape(shape)?)
    }

    pub fn input(&self, i: usize) -> Result<FieldSample> {
        self.field(&self.inputs, i)
    }

    pub fn output(&self, i: usize) -> Result<FieldSample> {
        self.field(&self.outputs, i)
    }

    /// Samples at the given positions, in that order.
    pub fn select(&self, idx: &[usize]) -> Result<Dataset> {
        let mut out = self.clone();
        out.inputs = self.inputs.gather(0, idx)?;
        out.outputs = self.outputs.gather(0, idx)?;
        out.manifest.spec.n = idx.len();
        Ok(out)
    }

    /// Samples `start..start+len`.
    pub fn range(&self, start: usize, len: usize) -> Result<Dataset> {
        let idx: Vec<usize> = (start..start + len).collect();
        let mut out = self.select(&idx)?;
        out.manifest.spec.first_sample += start as u64;
        Ok(out)
    }

    /// Strided subsampling of every spatial axis by `factor`.
    pub fn downsample(&self, factor: usize) -> Result<Dataset> {
        let d = self.grid.dim();
        let grid = self.grid.downsampled(&vec![factor; d])?;
        let mut inputs = self.inputs.clone();
        let mut outputs = self.outputs.clone();
        if factor > 1 {
            for axis in 0..d {
                let idx: Vec<usize> = (0..grid.sizes[axis]).map(|i| i * factor).collect();
                inputs = inputs.gather(axis + 1, &idx)?;
                outputs = outputs.gather(axis + 1, &idx)?;
            }
        }
        let mut manifest = self.manifest.clone();
        manifest.spec.downsample *= factor;
        manifest.resolution = grid.sizes[0];
        Ok(Dataset {
            manifest,
            grid,
            inputs,
            outputs,
        })
    }

    /// Same pairs with inputs replaced.
    pub fn with_inputs(&self, inputs: Tensor) -> Result<Dataset> {
        if inputs.shape() != self.inputs.shape() {
            return Err(Error::shape("with_inputs", inputs.shape(), self.inputs.shape()));
        }
        let mut out = self.clone();
        out.inputs = inputs;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_dataset_has_manifest() {
        let d = build_dataset(&DataSpec::new(Problem::Poisson, 0, 17, 1)).unwrap();
        assert!(d.is_empty());
        assert_eq!(d.manifest.resolution, 17);
        assert_eq!(d.inputs.shape(), &[0, 17, 1]);
    }

    #[test]
    fn downsample_identity_and_endpoints() {
        let g = Grid::unit_interval(421).unwrap();
        let f = FieldSample::scalar(g, (0..421).map(|i| i as f64).collect()).unwrap();
        assert_eq!(downsample(&f, &[1]).unwrap(), f);
        let d = downsample(&f, &[5]).unwrap();
        assert_eq!(d.grid.sizes, vec![85]);
        assert_eq!(d.data()[0], 0.0);
        assert_eq!(d.data()[84], 420.0);
        let p = Grid::periodic_1d(8192, 1.0).unwrap();
        let pf = FieldSample::scalar(p, vec![0.0; 8192]).unwrap();
        assert_eq!(downsample(&pf, &[32]).unwrap().grid.sizes, vec![256]);
        assert!(matches!(downsample(&f, &[8]), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_problem_is_config_error() {
        assert!(matches!(Problem::parse("heat"), Err(Error::Config(_))));
    }
}
