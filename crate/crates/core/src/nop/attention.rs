use super::layers::Activation;
use super::params::Bound;
use crate::error::{Error, Result};
use crate::tensor::Var;

/// Single-head attention as a nonlinear kernel integral on `v (B, k, n)`.
///
/// `u_j = act(v_j + R_out sum_q S_j(z_q) R_val v_q)` with
/// `z_q = (<A v_1, B v_q>, .., <A v_k, B v_q>) / sqrt(m)` and the softmax taken
/// over `j`. Matrices are stored for right multiplication: `{prefix}.a`, `.b`,
/// `.val` are `(n, m)` and `.out` is `(m, n)`.
pub fn attention_layer<'t>(p: &Bound<'t>, prefix: &str, act: Activation, v: Var<'t>) -> Result<Var<'t>> {
    let a = p.var(&format!("{prefix}.a"))?;
    let m = a.shape()[1];
    if m == 0 {
        return Err(Error::Config("attention key dimension must be at least 1".into()));
    }
    let q = v.matmul(a)?;
    let k = v.matmul(p.var(&format!("{prefix}.b"))?)?;
    let z = q.bmm(k.transpose()?)?.scale(1.0 / (m as f64).sqrt());
    let s = z.softmax(1)?;
    let val = v.matmul(p.var(&format!("{prefix}.val"))?)?;
    let mixed = s.bmm(val)?.matmul(p.var(&format!("{prefix}.out"))?)?;
    Ok(act.apply(v.add(mixed)?))
}
