use std::rc::Rc;

use crate::error::{Error, Result};
use crate::random::Rng;
use crate::tensor::Tensor;

/// Directed edges `src -> dst` with averaging weights `1 / |N(dst)|`.
#[derive(Clone, Debug)]
pub struct Edges {
    pub src: Rc<[usize]>,
    pub dst: Rc<[usize]>,
    pub n_src: usize,
    pub n_dst: usize,
    /// `(n_dst, 1)`.
    pub inv_degree: Tensor,
}

impl Edges {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    /// Neighbors of every destination, in source order.
    pub fn neighborhoods(&self) -> Vec<Vec<usize>> {
        let mut n = vec![Vec::new(); self.n_dst];
        for (&s, &d) in self.src.iter().zip(self.dst.iter()) {
            n[d].push(s);
        }
        n
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Edges from every source within distance `r` of each destination.
///
/// A destination with no source in its ball is linked to its nearest source,
/// so every neighborhood is nonempty. For a shared node set the node itself
/// is always in its ball.
pub fn ball_edges(dst: &Tensor, src: &Tensor, r: f64) -> Result<Edges> {
    if !(r > 0.0) {
        return Err(Error::Config(format!("graph radius must be positive, got {r}")));
    }
    if dst.ndim() != 2 || src.ndim() != 2 || dst.shape()[1] != src.shape()[1] {
        return Err(Error::shape("ball_edges", dst.shape(), src.shape()));
    }
    let d = dst.shape()[1];
    let (nd, ns) = (dst.shape()[0], src.shape()[0]);
    if ns == 0 && nd > 0 {
        return Err(Error::Config("graph has destinations but no source nodes".into()));
    }
    let r2 = r * r;
    let (mut es, mut ed) = (Vec::new(), Vec::new());
    let mut inv = Vec::with_capacity(nd);
    for i in 0..nd {
        let x = &dst.data()[i * d..(i + 1) * d];
        let before = es.len();
        let mut nearest = (f64::INFINITY, 0);
        for j in 0..ns {
            let y = &src.data()[j * d..(j + 1) * d];
            let q = dist2(x, y);
            if q < r2 {
                es.push(j);
                ed.push(i);
            }
            if q < nearest.0 {
                nearest = (q, j);
            }
        }
        if es.len() == before {
            es.push(nearest.1);
            ed.push(i);
        }
        inv.push(1.0 / (es.len() - before) as f64);
    }
    Ok(Edges {
        src: es.into(),
        dst: ed.into(),
        n_src: ns,
        n_dst: nd,
        inv_degree: Tensor::new(&[nd, 1], inv)?,
    })
}

/// Rows `idx` of a `(n, d)` coordinate table.
pub fn select_rows(coords: &Tensor, idx: &[usize]) -> Result<Tensor> {
    coords.gather(0, idx)
}

/// Radius graph on a node subset of a discretization.
#[derive(Clone, Debug)]
pub struct Graph {
    /// Positions of the nodes in the parent discretization.
    pub nodes: Rc<[usize]>,
    /// `(J', d)`.
    pub coords: Tensor,
    pub edges: Edges,
}

/// Samples `samples` of the `(J, d)` points without replacement and links each to all sampled points within `r`.
pub fn build_ball_graph(coords: &Tensor, r: f64, samples: usize, rng: &mut Rng) -> Result<Graph> {
    let j = coords.shape()[0];
    if samples == 0 || samples > j {
        return Err(Error::Config(format!("graph sample count {samples} must lie in 1..={j}")));
    }
    let nodes = if samples == j { (0..j).collect() } else { rng.sample_without_replacement(j, samples) };
    graph_on_nodes(coords, nodes, r)
}

/// Radius graph on the given node subset, in the given order.
pub fn graph_on_nodes(coords: &Tensor, nodes: Vec<usize>, r: f64) -> Result<Graph> {
    let sub = select_rows(coords, &nodes)?;
    let edges = ball_edges(&sub, &sub, r)?;
    Ok(Graph {
        nodes: nodes.into(),
        coords: sub,
        edges,
    })
}

/// Nested node hierarchy: level `l` holds the first `sizes[l]` nodes of level 0.
#[derive(Clone, Debug)]
pub struct MultiGraph {
    pub nodes: Rc<[usize]>,
    pub sizes: Vec<usize>,
    /// Level coordinates, `(sizes[l], d)`.
    pub coords: Vec<Tensor>,
    /// Within-level edges.
    pub intra: Vec<Edges>,
    /// Level `l` to level `l + 1`.
    pub down: Vec<Edges>,
    /// Level `l + 1` to level `l`.
    pub up: Vec<Edges>,
}

impl MultiGraph {
    pub fn levels(&self) -> usize {
        self.sizes.len()
    }
}

/// Builds the hierarchy on `nodes` (level-0 order); transitions between `l` and `l + 1` use radius `radii[l + 1]`.
pub fn multilevel_graph(coords: &Tensor, nodes: Vec<usize>, sizes: &[usize], radii: &[f64]) -> Result<MultiGraph> {
    if sizes.is_empty() || sizes.len() != radii.len() {
        return Err(Error::Config(format!(
            "multilevel graph needs one radius per level, got {} levels and {} radii",
            sizes.len(),
            radii.len()
        )));
    }
    if sizes[0] != nodes.len() || sizes.windows(2).any(|w| w[1] > w[0]) || sizes.contains(&0) {
        return Err(Error::Config(format!(
            "level node counts {sizes:?} must be positive, nonincreasing and start at {}",
            nodes.len()
        )));
    }
    if radii.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config(format!("level radii {radii:?} must be nondecreasing")));
    }
    let all = select_rows(coords, &nodes)?;
    let level_coords: Vec<Tensor> = sizes.iter().map(|&n| all.slice(0, 0, n)).collect::<Result<_>>()?;
    let mut intra = Vec::new();
    let mut down = Vec::new();
    let mut up = Vec::new();
    for l in 0..sizes.len() {
        intra.push(ball_edges(&level_coords[l], &level_coords[l], radii[l])?);
        if l + 1 < sizes.len() {
            down.push(ball_edges(&level_coords[l + 1], &level_coords[l], radii[l + 1])?);
            up.push(ball_edges(&level_coords[l], &level_coords[l + 1], radii[l + 1])?);
        }
    }
    Ok(MultiGraph {
        nodes: nodes.into(),
        sizes: sizes.to_vec(),
        coords: level_coords,
        intra,
        down,
        up,
    })
}

/// Splits `0..n` into random disjoint chunks of at most `size` points covering every index.
pub fn random_partition(n: usize, size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let perm = rng.permutation(n);
    let parts = n.div_ceil(size.max(1));
    (0..parts)
        .map(|p| perm[p * n / parts..(p + 1) * n / parts].to_vec())
        .collect()
}
