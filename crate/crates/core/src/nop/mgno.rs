use super::gno::{apply_kernel, edge_features, kernel_values};
use super::graph::MultiGraph;
use super::layers::{dense, Activation};
use super::params::Bound;
use crate::error::{Error, Result};
use crate::tensor::Var;

/// Per-edge kernel matrices of every transition, evaluated once per input.
pub struct VcycleKernels<'t> {
    pub intra: Vec<Var<'t>>,
    pub down: Vec<Var<'t>>,
    pub up: Vec<Var<'t>>,
}

/// Evaluates `kappa_{l,l}`, `kappa_{l+1,l}` and `kappa_{l,l+1}` on their edges for input `a (B, J_1, d_a)`.
pub fn vcycle_kernels<'t>(
    p: &Bound<'t>,
    prefix: &str,
    hidden: usize,
    act: Activation,
    width: usize,
    g: &MultiGraph,
    a: Var<'t>,
) -> Result<VcycleKernels<'t>> {
    let levels = g.levels();
    let a_l: Vec<Var<'t>> = g
        .sizes
        .iter()
        .map(|&n| if n == g.sizes[0] { Ok(a) } else { a.slice(1, 0, n) })
        .collect::<Result<_>>()?;
    let mut out = VcycleKernels {
        intra: Vec::new(),
        down: Vec::new(),
        up: Vec::new(),
    };
    for l in 0..levels {
        let f = edge_features(&g.intra[l], &g.coords[l], &g.coords[l], a_l[l], a_l[l])?;
        out.intra.push(kernel_values(p, &format!("{prefix}.k{l}{l}"), hidden, act, width, f)?);
        if l + 1 < levels {
            let f = edge_features(&g.down[l], &g.coords[l + 1], &g.coords[l], a_l[l + 1], a_l[l])?;
            out.down.push(kernel_values(p, &format!("{prefix}.k{}{l}", l + 1), hidden, act, width, f)?);
            let f = edge_features(&g.up[l], &g.coords[l], &g.coords[l + 1], a_l[l], a_l[l + 1])?;
            out.up.push(kernel_values(p, &format!("{prefix}.k{l}{}", l + 1), hidden, act, width, f)?);
        }
    }
    Ok(out)
}

/// One V-cycle on level-1 features `v (B, J_1, C)`.
///
/// Downward: `c_{l+1} = act(h_{l+1} + K_{l+1,l} c_l)` with `c_1 = v`.
/// Upward: `h_l = act(W_l c_l + b_l + K_{l,l} c_l + K_{l,l+1} h_{l+1})`, no coarse term at `l = L`.
/// `hat` carries the upward states between cycles; `None` entries act as zero.
pub fn mgno_vcycle<'t>(
    p: &Bound<'t>,
    prefix: &str,
    act: Activation,
    g: &MultiGraph,
    k: &VcycleKernels<'t>,
    hat: &mut Vec<Option<Var<'t>>>,
    v: Var<'t>,
) -> Result<Var<'t>> {
    let levels = g.levels();
    if hat.len() != levels || k.intra.len() != levels {
        return Err(Error::Config(format!(
            "V-cycle over {levels} levels got {} carried states and {} level kernels",
            hat.len(),
            k.intra.len()
        )));
    }
    let mut check = vec![v];
    for l in 0..levels - 1 {
        let mut t = apply_kernel(&g.down[l], k.down[l], check[l])?;
        if let Some(h) = hat[l + 1] {
            t = t.add(h)?;
        }
        check.push(act.apply(t));
    }
    let mut next: Vec<Option<Var<'t>>> = vec![None; levels];
    for l in (0..levels).rev() {
        let mut t = dense(p, &format!("{prefix}.lin{l}"), check[l])?.add(apply_kernel(&g.intra[l], k.intra[l], check[l])?)?;
        if l + 1 < levels {
            let coarse = next[l + 1].expect("coarser level computed first");
            t = t.add(apply_kernel(&g.up[l], k.up[l], coarse)?)?;
        }
        next[l] = Some(act.apply(t));
    }
    *hat = next;
    Ok(hat[0].expect("finest level computed"))
}
