use super::graph::{Edges, Graph};
use super::layers::{batch_coords, dense, init_mlp, mlp, Activation};
use super::params::{Bound, ParamStore};
use crate::error::Result;
use crate::random::Rng;
use crate::tensor::{Tensor, Var};

/// Kernel network `e(x, y) -> (width x width)` with `hidden` layers of size `kernel_width`.
pub fn init_kernel_net(
    store: &mut ParamStore,
    prefix: &str,
    edge_dim: usize,
    kernel_width: usize,
    hidden: usize,
    out: usize,
    rng: &mut Rng,
) -> Result<()> {
    let mut sizes = vec![edge_dim];
    sizes.extend(std::iter::repeat_n(kernel_width, hidden));
    sizes.push(out);
    init_mlp(store, prefix, &sizes, rng)
}

/// Edge features `(x, y, a(x), a(y))` for edges `y -> x`: `(B, E, 2d + 2 d_a)`.
pub fn edge_features<'t>(
    edges: &Edges,
    dst_coords: &Tensor,
    src_coords: &Tensor,
    a_dst: Var<'t>,
    a_src: Var<'t>,
) -> Result<Var<'t>> {
    let tape = a_dst.tape();
    let b = a_dst.shape()[0];
    let x = tape.constant(batch_coords(&dst_coords.gather(0, &edges.dst)?, b)?);
    let y = tape.constant(batch_coords(&src_coords.gather(0, &edges.src)?, b)?);
    let ax = a_dst.gather(1, edges.dst.clone())?;
    let ay = a_src.gather(1, edges.src.clone())?;
    tape.concat(&[x, y, ax, ay], 2)
}

/// Kernel-net output per edge, `(B, E, C, C)`.
pub fn kernel_values<'t>(p: &Bound<'t>, kernel: &str, hidden: usize, act: Activation, width: usize, features: Var<'t>) -> Result<Var<'t>> {
    let fs = features.shape();
    mlp(p, kernel, hidden + 1, act, features)?.reshape(&[fs[0], fs[1], width, width])
}

/// `(1 / |N(x)|) sum_{y in N(x)} k(x, y) v(y)` for per-edge matrices `k (B, E, C, C)` and `v (B, n_src, C)`.
pub fn apply_kernel<'t>(edges: &Edges, k: Var<'t>, v: Var<'t>) -> Result<Var<'t>> {
    let vs = v.shape();
    let (b, c) = (vs[0], vs[2]);
    let c_out = k.shape()[2];
    let src = v.gather(1, edges.src.clone())?.reshape(&[b, edges.len(), 1, c])?;
    let msg = k.mul(src)?.sum_axis(3)?.reshape(&[b, edges.len(), c_out])?;
    let agg = msg.scatter_add(1, edges.dst.clone(), edges.n_dst)?;
    agg.mul(v.tape().constant(edges.inv_degree.clone()))
}

/// `act(W v(x) + b + (1 / |N(x)|) sum kappa(e(x, y)) v(y))` on a single graph.
pub fn gno_layer<'t>(
    p: &Bound<'t>,
    prefix: &str,
    hidden: usize,
    act: Activation,
    g: &Graph,
    a: Var<'t>,
    v: Var<'t>,
) -> Result<Var<'t>> {
    let feats = edge_features(&g.edges, &g.coords, &g.coords, a, a)?;
    let kv = kernel_values(p, &format!("{prefix}.kernel"), hidden, act, v.shape()[2], feats)?;
    let k = apply_kernel(&g.edges, kv, v)?;
    Ok(act.apply(dense(p, &format!("{prefix}.lin"), v)?.add(k)?))
}
