//! Neural operators: lift, a stack of kernel-integral layers, and a pointwise projection.
//!
//! Every variant consumes the input function sampled on a point set together
//! with the point coordinates, so a trained model can be queried on any
//! discretization its kernel supports. Inputs and outputs are flattened to
//! `(B, J, channels)` in row-major grid order.

pub mod attention;
pub mod deeponet;
pub mod fno;
pub mod gno;
pub mod graph;
pub mod layers;
pub mod lno;
pub mod mgno;
pub mod params;

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::Grid;
use crate::random::Rng;
use crate::tensor::{Tape, Tensor, Var};

pub use graph::{Graph, MultiGraph};
pub use layers::Activation;
pub use params::{Bound, ParamStore};

use layers::{batch_coords, dense, init_dense, init_mlp, mlp};

/// Kernel parameterization of the hidden layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum Arch {
    /// Fourier layers on a uniform grid, one cutoff per spatial axis.
    Fno { modes: Vec<usize> },
    /// Space-time Fourier layers; the input window is repeated over the output times.
    Fno3d { modes: Vec<usize>, pad_t: usize },
    /// Message passing on a radius graph over `samples` nodes.
    Gno {
        radius: f64,
        samples: usize,
        kernel_width: usize,
        kernel_layers: usize,
    },
    /// Rank-`rank` separable kernel.
    Lno {
        rank: usize,
        factor_width: usize,
        factor_layers: usize,
    },
    /// V-cycle over nested node sets of sizes `levels`.
    Mgno {
        levels: Vec<usize>,
        radii: Vec<f64>,
        kernel_width: usize,
        kernel_layers: usize,
    },
    /// Single-head attention layers over all points.
    Attention { key_dim: usize },
    /// Branch net on fixed sensor values, trunk net on query points.
    DeepOnet {
        sensors: usize,
        basis: usize,
        hidden: usize,
        depth: usize,
    },
    /// One linear integral layer `u(x) = mean_y kappa(x, y) a(y)`, no lift or projection.
    Kernel { kernel_width: usize, kernel_layers: usize },
}

impl Arch {
    pub fn name(&self) -> &'static str {
        match self {
            Arch::Fno { .. } => "fno",
            Arch::Fno3d { .. } => "fno3d",
            Arch::Gno { .. } => "gno",
            Arch::Lno { .. } => "lno",
            Arch::Mgno { .. } => "mgno",
            Arch::Attention { .. } => "attention",
            Arch::DeepOnet { .. } => "deep_onet",
            Arch::Kernel { .. } => "kernel",
        }
    }

    /// Whether one parameter set can be evaluated on any discretization.
    pub fn discretization_invariant(&self) -> bool {
        !matches!(self, Arch::DeepOnet { .. })
    }
}

fn default_projection_width() -> usize {
    128
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Arch,
    /// Spatial dimension of the domain.
    pub dim: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Channel width shared by all hidden layers.
    pub width: usize,
    /// Number of kernel layers.
    pub layers: usize,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default = "default_projection_width")]
    pub projection_width: usize,
    /// Emit one step at a time from a sliding window of `in_channels` steps.
    #[serde(default)]
    pub autoregressive: bool,
}

impl ModelConfig {
    /// 1-D FNO with the usual Burgers sizes.
    pub fn fno_1d() -> Self {
        ModelConfig {
            arch: Arch::Fno { modes: vec![16] },
            dim: 1,
            in_channels: 1,
            out_channels: 1,
            width: 64,
            layers: 4,
            activation: Activation::Relu,
            projection_width: 128,
            autoregressive: false,
        }
    }

    /// 2-D FNO with the usual Darcy sizes.
    pub fn fno_2d() -> Self {
        ModelConfig {
            arch: Arch::Fno { modes: vec![12, 12] },
            dim: 2,
            width: 32,
            ..Self::fno_1d()
        }
    }

    /// Channels produced by a single network evaluation.
    fn step_channels(&self) -> usize {
        if self.autoregressive || matches!(self.arch, Arch::Fno3d { .. }) {
            1
        } else {
            self.out_channels
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.dim == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return bad("model dim, in_channels and out_channels must be positive".into());
        }
        if self.width == 0 || self.projection_width == 0 {
            return bad("model width and projection_width must be positive".into());
        }
        if self.autoregressive && !matches!(self.arch, Arch::Fno { .. }) {
            return bad(format!("autoregressive mode is only defined for fno, not {}", self.arch.name()));
        }
        match &self.arch {
            Arch::Fno { modes } => {
                if modes.len() != self.dim || modes.contains(&0) {
                    return bad(format!("fno needs one positive mode cutoff per axis, got {modes:?} for dim {}", self.dim));
                }
            }
            Arch::Fno3d { modes, .. } => {
                if self.dim != 2 || modes.len() != 3 || modes.contains(&0) {
                    return bad(format!("fno3d needs a 2-D domain and three positive mode cutoffs, got {modes:?}"));
                }
            }
            Arch::Gno { radius, samples, .. } => {
                if !(*radius > 0.0) || *samples == 0 {
                    return bad(format!("gno radius {radius} and samples {samples} must be positive"));
                }
            }
            Arch::Lno { rank, .. } => {
                if *rank == 0 {
                    return bad("lno rank must be at least 1".into());
                }
            }
            Arch::Mgno { levels, radii, .. } => {
                if levels.is_empty()
                    || levels.len() != radii.len()
                    || levels.contains(&0)
                    || levels.windows(2).any(|w| w[1] > w[0])
                    || radii.iter().any(|r| !(*r > 0.0))
                    || radii.windows(2).any(|w| w[1] < w[0])
                {
                    return bad(format!(
                        "mgno levels {levels:?} must be positive and nonincreasing with one positive nondecreasing radius each, got {radii:?}"
                    ));
                }
            }
            Arch::Attention { key_dim } => {
                if *key_dim == 0 {
                    return bad("attention key_dim must be at least 1".into());
                }
            }
            Arch::DeepOnet { sensors, basis, depth, .. } => {
                if *sensors == 0 || *basis == 0 || *depth == 0 {
                    return bad("deep_onet sensors, basis and depth must be positive".into());
                }
            }
            Arch::Kernel { .. } => {
                if self.in_channels != 1 || self.out_channels != 1 {
                    return bad("kernel model maps one scalar field to another".into());
                }
            }
        }
        Ok(())
    }
}

/// Point set and graphs for one evaluation of a model on a grid.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub grid: Grid,
    /// Selected points in row-major grid order positions.
    pub nodes: Rc<[usize]>,
    /// `(J', d)`.
    pub coords: Tensor,
    /// Every grid point is selected, in grid order.
    pub full: bool,
    graph: Option<Graph>,
    multi: Option<MultiGraph>,
}

impl Prepared {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Rows of `(B, s.., C)` grid values at the selected points, `(B, J', C)`.
    pub fn gather(&self, values: &Tensor) -> Result<Tensor> {
        let s = values.shape();
        let b = s[0];
        let c = *s.last().expect("rank");
        let flat = values.reshape(&[b, self.grid.num_points(), c])?;
        if self.full {
            Ok(flat)
        } else {
            flat.gather(1, &self.nodes)
        }
    }
}

/// Configuration plus parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorModel {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl OperatorModel {
    /// Fresh parameters drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::with_stream(seed, 0x1417);
        let mut p = ParamStore::new();
        let c = &config;
        let (d, w, cin) = (c.dim, c.width, c.in_channels);
        let lifted = match c.arch {
            Arch::Fno3d { .. } => cin + 3,
            _ => cin + d,
        };
        let uses_stack = !matches!(c.arch, Arch::DeepOnet { .. } | Arch::Kernel { .. });
        if uses_stack {
            init_dense(&mut p, "lift", lifted, w, &mut rng)?;
        }
        match &c.arch {
            Arch::Fno { modes } | Arch::Fno3d { modes, .. } => {
                for t in 0..c.layers {
                    fno::init_modes(&mut p, &format!("layer{t}"), modes, w, &mut rng)?;
                    init_dense(&mut p, &format!("layer{t}.lin"), w, w, &mut rng)?;
                }
            }
            Arch::Gno {
                kernel_width,
                kernel_layers,
                ..
            } => {
                for t in 0..c.layers {
                    gno::init_kernel_net(&mut p, &format!("layer{t}.kernel"), 2 * (d + cin), *kernel_width, *kernel_layers, w * w, &mut rng)?;
                    init_dense(&mut p, &format!("layer{t}.lin"), w, w, &mut rng)?;
                }
            }
            Arch::Lno {
                rank,
                factor_width,
                factor_layers,
            } => {
                for t in 0..c.layers {
                    for f in ["phi", "psi"] {
                        gno::init_kernel_net(&mut p, &format!("layer{t}.{f}"), d + cin, *factor_width, *factor_layers, rank * w * w, &mut rng)?;
                    }
                    init_dense(&mut p, &format!("layer{t}.lin"), w, w, &mut rng)?;
                }
            }
            Arch::Mgno {
                levels,
                kernel_width,
                kernel_layers,
                ..
            } => {
                let e = 2 * (d + cin);
                for l in 0..levels.len() {
                    gno::init_kernel_net(&mut p, &format!("mgno.k{l}{l}"), e, *kernel_width, *kernel_layers, w * w, &mut rng)?;
                    init_dense(&mut p, &format!("mgno.lin{l}"), w, w, &mut rng)?;
                    if l + 1 < levels.len() {
                        gno::init_kernel_net(&mut p, &format!("mgno.k{}{l}", l + 1), e, *kernel_width, *kernel_layers, w * w, &mut rng)?;
                        gno::init_kernel_net(&mut p, &format!("mgno.k{l}{}", l + 1), e, *kernel_width, *kernel_layers, w * w, &mut rng)?;
                    }
                }
            }
            Arch::Attention { key_dim } => {
                let m = *key_dim;
                for t in 0..c.layers {
                    let wb = 1.0 / (w as f64).sqrt();
                    for n in ["a", "b", "val"] {
                        p.insert_uniform(format!("layer{t}.{n}"), &[w, m], wb, &mut rng)?;
                    }
                    p.insert_uniform(format!("layer{t}.out"), &[m, w], 1.0 / (m as f64).sqrt(), &mut rng)?;
                }
            }
            Arch::DeepOnet {
                sensors,
                basis,
                hidden,
                depth,
            } => {
                let out = basis * c.out_channels;
                let mut branch = vec![*sensors];
                let mut trunk = vec![d];
                for _ in 1..*depth {
                    branch.push(*hidden);
                    trunk.push(*hidden);
                }
                branch.push(out);
                trunk.push(out);
                init_mlp(&mut p, "onet.branch", &branch, &mut rng)?;
                init_mlp(&mut p, "onet.trunk", &trunk, &mut rng)?;
            }
            Arch::Kernel {
                kernel_width,
                kernel_layers,
            } => {
                gno::init_kernel_net(&mut p, "kernel", 2 * d, *kernel_width, *kernel_layers, 1, &mut rng)?;
            }
        }
        if uses_stack {
            init_dense(&mut p, "proj.l0", w, c.projection_width, &mut rng)?;
            init_dense(&mut p, "proj.l1", c.projection_width, c.step_channels(), &mut rng)?;
        }
        Ok(OperatorModel { config, params: p })
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    fn check_grid(&self, grid: &Grid) -> Result<()> {
        if grid.dim() != self.config.dim {
            return Err(Error::Config(format!(
                "{} model built for {}-D inputs got a {}-D grid",
                self.config.arch.name(),
                self.config.dim,
                grid.dim()
            )));
        }
        Ok(())
    }

    /// Every grid point in grid order; graph variants get their graph on all points.
    pub fn prepare_full(&self, grid: &Grid) -> Result<Prepared> {
        self.prepare_nodes(grid, (0..grid.num_points()).collect())
    }

    /// Training-time point selection: graph variants draw a fresh node subsample.
    pub fn prepare(&self, grid: &Grid, rng: &mut Rng) -> Result<Prepared> {
        self.check_grid(grid)?;
        let j = grid.num_points();
        match &self.config.arch {
            Arch::Gno { samples, .. } if *samples < j => self.prepare_nodes(grid, rng.sample_without_replacement(j, *samples)),
            Arch::Mgno { levels, .. } if levels[0] < j => self.prepare_nodes(grid, rng.sample_without_replacement(j, levels[0])),
            _ => self.prepare_full(grid),
        }
    }

    /// Evaluation on the given points, in the given order.
    pub fn prepare_nodes(&self, grid: &Grid, nodes: Vec<usize>) -> Result<Prepared> {
        self.check_grid(grid)?;
        let j = grid.num_points();
        if let Some(&bad) = nodes.iter().find(|&&n| n >= j) {
            return Err(Error::Contract(format!("node {bad} outside grid of {j} points")));
        }
        let full = nodes.len() == j && nodes.iter().enumerate().all(|(i, &n)| i == n);
        let all = grid.coords();
        let coords = if full { all.clone() } else { all.gather(0, &nodes)? };
        let needs_full = matches!(self.config.arch, Arch::Fno { .. } | Arch::Fno3d { .. } | Arch::DeepOnet { .. });
        if needs_full && !full {
            return Err(Error::Config(format!("{} needs every grid point in grid order", self.config.arch.name())));
        }
        let (mut graph, mut multi) = (None, None);
        match &self.config.arch {
            Arch::Gno { radius, .. } => graph = Some(graph::graph_on_nodes(&all, nodes.clone(), *radius)?),
            Arch::Mgno { levels, radii, .. } => {
                let n = nodes.len();
                let sizes: Vec<usize> = levels.iter().map(|&s| s.min(n)).collect();
                multi = Some(graph::multilevel_graph(&all, nodes.clone(), &sizes, radii)?);
            }
            _ => {}
        }
        Ok(Prepared {
            grid: grid.clone(),
            nodes: nodes.into(),
            coords,
            full,
            graph,
            multi,
        })
    }

    /// Output `(B, J', out_channels)` for input `a (B, J', in_channels)` on the prepared points.
    pub fn forward<'t>(&self, p: &Bound<'t>, prep: &Prepared, a: Var<'t>) -> Result<Var<'t>> {
        let s = a.shape();
        if s.len() != 3 || s[1] != prep.len() || s[2] != self.config.in_channels {
            return Err(Error::shape(
                "model input",
                &s,
                &[0, prep.len(), self.config.in_channels],
            ));
        }
        if self.config.autoregressive {
            return self.rollout(p, prep, a, self.config.out_channels);
        }
        self.forward_once(p, prep, a)
    }

    /// `steps` autoregressive steps from the window `a (B, J, in_channels)`.
    pub fn rollout<'t>(&self, p: &Bound<'t>, prep: &Prepared, a: Var<'t>, steps: usize) -> Result<Var<'t>> {
        let cin = self.config.in_channels;
        let mut window = a;
        let mut outs = Vec::with_capacity(steps);
        for _ in 0..steps {
            let y = self.forward_once(p, prep, window)?;
            outs.push(y);
            window = if cin == 1 {
                y
            } else {
                a.tape().concat(&[window.slice(2, 1, cin - 1)?, y], 2)?
            };
        }
        a.tape().concat(&outs, 2)
    }

    /// One network evaluation; autoregressive models emit a single step.
    pub fn forward_once<'t>(&self, p: &Bound<'t>, prep: &Prepared, a: Var<'t>) -> Result<Var<'t>> {
        let c = &self.config;
        let tape = a.tape();
        let b = a.shape()[0];
        let j = prep.len();
        let act = c.activation;
        match &c.arch {
            Arch::DeepOnet { depth, .. } => {
                let sensors = a.reshape(&[b, j * c.in_channels])?;
                let query = tape.constant(prep.coords.clone());
                return deeponet::deeponet_forward(p, "onet", *depth, act, sensors, query, c.out_channels);
            }
            Arch::Kernel { kernel_layers, .. } => {
                let k = self.kernel_matrix_var(p, tape, &prep.coords, &prep.coords, *kernel_layers)?;
                let u = a.reshape(&[b, j])?.matmul(k.transpose()?)?.scale(1.0 / j as f64);
                return u.reshape(&[b, j, 1]);
            }
            _ => {}
        }
        if let Arch::Fno3d { modes, pad_t } = &c.arch {
            return self.forward_fno3d(p, prep, a, modes, *pad_t);
        }
        let x = tape.constant(batch_coords(&prep.coords, b)?);
        let input = tape.concat(&[x, a], 2)?;
        let mut v = dense(p, "lift", input)?;
        match &c.arch {
            Arch::Fno { modes } => {
                let mut grid_shape = vec![b];
                grid_shape.extend_from_slice(&prep.grid.sizes);
                grid_shape.push(c.width);
                v = v.reshape(&grid_shape)?;
                for t in 0..c.layers {
                    v = fno::fno_layer(p, &format!("layer{t}"), modes, 0, act, v)?;
                }
                v = v.reshape(&[b, j, c.width])?;
            }
            Arch::Gno { kernel_layers, .. } => {
                let g = prep.graph.as_ref().ok_or_else(|| Error::Contract("gno evaluated without a graph".into()))?;
                for t in 0..c.layers {
                    v = gno::gno_layer(p, &format!("layer{t}"), *kernel_layers, act, g, a, v)?;
                }
            }
            Arch::Lno { rank, factor_layers, .. } => {
                for t in 0..c.layers {
                    v = lno::lno_layer(p, &format!("layer{t}"), *rank, *factor_layers, act, input, v)?;
                }
            }
            Arch::Mgno { kernel_layers, .. } => {
                let g = prep.multi.as_ref().ok_or_else(|| Error::Contract("mgno evaluated without a hierarchy".into()))?;
                let k = mgno::vcycle_kernels(p, "mgno", *kernel_layers, act, c.width, g, a)?;
                let mut hat = vec![None; g.levels()];
                for _ in 0..c.layers {
                    v = mgno::mgno_vcycle(p, "mgno", act, g, &k, &mut hat, v)?;
                }
            }
            Arch::Attention { .. } => {
                for t in 0..c.layers {
                    v = attention::attention_layer(p, &format!("layer{t}"), act, v)?;
                }
            }
            Arch::Fno3d { .. } | Arch::DeepOnet { .. } | Arch::Kernel { .. } => unreachable!("handled above"),
        }
        project(p, act, v)
    }

    fn forward_fno3d<'t>(&self, p: &Bound<'t>, prep: &Prepared, a: Var<'t>, modes: &[usize], pad_t: usize) -> Result<Var<'t>> {
        let c = &self.config;
        let tape = a.tape();
        let b = a.shape()[0];
        let j = prep.len();
        let nt = c.out_channels;
        let (sx, sy) = (prep.grid.sizes[0], prep.grid.sizes[1]);
        // (B, J, Cin) -> (B, J, T, Cin) by repetition along time.
        let reps: Vec<Var<'t>> = (0..nt).map(|_| a.reshape(&[b, j, 1, c.in_channels])).collect::<Result<_>>()?;
        let a_t = tape.concat(&reps, 2)?;
        let mut st = Vec::with_capacity(j * nt * 3);
        for q in 0..j {
            let xy = &prep.coords.data()[q * 2..q * 2 + 2];
            for t in 0..nt {
                st.extend_from_slice(&[xy[0], xy[1], (t + 1) as f64 / nt as f64]);
            }
        }
        let st = tape.constant(batch_coords(&Tensor::new(&[j, nt, 3], st)?, b)?);
        let mut v = dense(p, "lift", tape.concat(&[st, a_t], 3)?)?.reshape(&[b, sx, sy, nt, c.width])?;
        for t in 0..c.layers {
            v = fno::fno_layer(p, &format!("layer{t}"), modes, pad_t, c.activation, v)?;
        }
        project(p, c.activation, v.reshape(&[b, j, nt, c.width])?)?.reshape(&[b, j, nt])
    }

    fn kernel_matrix_var<'t>(&self, p: &Bound<'t>, tape: &'t Tape, xs: &Tensor, ys: &Tensor, layers: usize) -> Result<Var<'t>> {
        let (n, m, d) = (xs.shape()[0], ys.shape()[0], xs.shape()[1]);
        let mut f = Vec::with_capacity(n * m * 2 * d);
        for i in 0..n {
            for k in 0..m {
                f.extend_from_slice(&xs.data()[i * d..(i + 1) * d]);
                f.extend_from_slice(&ys.data()[k * d..(k + 1) * d]);
            }
        }
        let feats = tape.constant(Tensor::new(&[n * m, 2 * d], f)?);
        mlp(p, "kernel", layers + 1, self.config.activation, feats)?.reshape(&[n, m])
    }

    /// Learned kernel `kappa(x_i, y_k)` of the single-layer kernel model, `(n, m)`.
    pub fn kernel_matrix(&self, xs: &Tensor, ys: &Tensor) -> Result<Tensor> {
        let Arch::Kernel { kernel_layers, .. } = self.config.arch else {
            return Err(Error::Contract(format!("{} model has no explicit kernel", self.config.arch.name())));
        };
        let tape = Tape::new();
        let p = self.params.bind(&tape, false);
        Ok((*self.kernel_matrix_var(&p, &tape, xs, ys, kernel_layers)?.value()).clone())
    }

    /// Output fields `(B, s.., out_channels)` for grid inputs `(B, s.., in_channels)`.
    ///
    /// Graph variants whose node budget is below the grid size evaluate on a
    /// random partition of the grid into chunks of that size.
    pub fn predict(&self, grid: &Grid, inputs: &Tensor, rng: &mut Rng) -> Result<Tensor> {
        self.check_grid(grid)?;
        let s = inputs.shape();
        if s.len() != grid.dim() + 2 || s[1..=grid.dim()] != grid.sizes[..] || s[grid.dim() + 1] != self.config.in_channels {
            let mut want = vec![0];
            want.extend_from_slice(&grid.sizes);
            want.push(self.config.in_channels);
            return Err(Error::shape("predict", s, &want));
        }
        if let Arch::DeepOnet { sensors, .. } = self.config.arch {
            let got = grid.num_points() * self.config.in_channels;
            if got != sensors {
                return Err(Error::Contract(format!(
                    "fixed-sensor architecture: model was built for {sensors} sensor values, the grid provides {got}"
                )));
            }
        }
        let j = grid.num_points();
        let b = s[0];
        let cout = self.config.out_channels;
        let chunks: Vec<Vec<usize>> = match &self.config.arch {
            Arch::Gno { samples, .. } if *samples < j => graph::random_partition(j, *samples, rng),
            Arch::Mgno { levels, .. } if levels[0] < j => graph::random_partition(j, levels[0], rng),
            _ => vec![(0..j).collect()],
        };
        let mut out = vec![0.0; b * j * cout];
        for nodes in chunks {
            let prep = self.prepare_nodes(grid, nodes)?;
            let tape = Tape::new();
            let p = self.params.bind(&tape, false);
            let y = self.forward(&p, &prep, tape.constant(prep.gather(inputs)?))?.value();
            let jn = prep.len();
            for bi in 0..b {
                for (q, &node) in prep.nodes.iter().enumerate() {
                    let src = &y.data()[(bi * jn + q) * cout..(bi * jn + q + 1) * cout];
                    out[(bi * j + node) * cout..(bi * j + node + 1) * cout].copy_from_slice(src);
                }
            }
        }
        let mut shape = s.to_vec();
        shape[grid.dim() + 1] = cout;
        Tensor::new(&shape, out)
    }
}

/// Two-layer pointwise projection, no activation after the last layer.
fn project<'t>(p: &Bound<'t>, act: Activation, v: Var<'t>) -> Result<Var<'t>> {
    mlp(p, "proj", 2, act, v)
}
