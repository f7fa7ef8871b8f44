use super::layers::{mlp, Activation};
use super::params::Bound;
use crate::error::{Error, Result};
use crate::tensor::Var;

/// `G(a)(x)_c = sum_k G_{c,k}(a~) phi_{c,k}(x)` for sensor values `(B, q)` and query points `(J, d)`, giving `(B, J, C)`.
pub fn deeponet_forward<'t>(
    p: &Bound<'t>,
    prefix: &str,
    depth: usize,
    act: Activation,
    sensors: Var<'t>,
    query: Var<'t>,
    channels: usize,
) -> Result<Var<'t>> {
    let expect = p.var(&format!("{prefix}.branch.l0.w"))?.shape()[0];
    let got = sensors.shape()[1];
    if got != expect {
        return Err(Error::Contract(format!(
            "fixed-sensor architecture: model was built for {expect} sensor values, input has {got}"
        )));
    }
    let b = sensors.shape()[0];
    let j = query.shape()[0];
    let branch = mlp(p, &format!("{prefix}.branch"), depth, act, sensors)?;
    let trunk = mlp(p, &format!("{prefix}.trunk"), depth, act, query)?;
    let basis = branch.shape()[1] / channels;
    let branch = branch.reshape(&[b, 1, channels, basis])?;
    let trunk = trunk.reshape(&[1, j, channels, basis])?;
    branch.mul(trunk)?.sum_axis(3)?.reshape(&[b, j, channels])
}
