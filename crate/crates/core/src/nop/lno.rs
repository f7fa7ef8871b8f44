use super::layers::{dense, mlp, Activation};
use super::params::Bound;
use crate::error::Result;
use crate::tensor::Var;

/// `act(W v + b + sum_j phi_j(x) <psi_j, v>)` with matrix-valued factors and grid-mean inner products.
///
/// `features (B, J, F)` feed both factor networks, whose outputs are read as
/// `(rank, C, C)` blocks. Cost is linear in `J`.
pub fn lno_layer<'t>(
    p: &Bound<'t>,
    prefix: &str,
    rank: usize,
    hidden: usize,
    act: Activation,
    features: Var<'t>,
    v: Var<'t>,
) -> Result<Var<'t>> {
    let vs = v.shape();
    let (b, j, c) = (vs[0], vs[1], vs[2]);
    let phi = mlp(p, &format!("{prefix}.phi"), hidden + 1, act, features)?.reshape(&[b, j, rank, c, c])?;
    let psi = mlp(p, &format!("{prefix}.psi"), hidden + 1, act, features)?.reshape(&[b, j, rank, c, c])?;
    let proj = psi.mul(v.reshape(&[b, j, 1, 1, c])?)?.sum_axis(4)?.mean_axis(1)?.reshape(&[b, 1, rank, 1, c])?;
    let k = phi.mul(proj)?.sum_axis(4)?.sum_axis(2)?.reshape(&[b, j, c])?;
    Ok(act.apply(dense(p, &format!("{prefix}.lin"), v)?.add(k)?))
}
