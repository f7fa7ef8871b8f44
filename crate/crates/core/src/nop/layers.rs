use serde::{Deserialize, Serialize};

use super::params::{Bound, ParamStore};
use crate::error::Result;
use crate::random::Rng;
use crate::tensor::{Tensor, Var};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Gelu,
    Identity,
}

impl Activation {
    pub fn apply<'t>(self, x: Var<'t>) -> Var<'t> {
        match self {
            Activation::Relu => x.relu(),
            Activation::Gelu => x.gelu(),
            Activation::Identity => x,
        }
    }

    /// Plain-value counterpart of [`Activation::apply`].
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Gelu => 0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2)),
            Activation::Identity => x,
        }
    }
}

/// Adds `{prefix}.w (fan_in, fan_out)` and `{prefix}.b (fan_out)`, both `uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn init_dense(store: &mut ParamStore, prefix: &str, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Result<()> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    store.insert_uniform(format!("{prefix}.w"), &[fan_in, fan_out], bound, rng)?;
    store.insert_uniform(format!("{prefix}.b"), &[fan_out], bound, rng)
}

/// `x w + b` over the last axis.
pub fn dense<'t>(p: &Bound<'t>, prefix: &str, x: Var<'t>) -> Result<Var<'t>> {
    x.matmul(p.var(&format!("{prefix}.w"))?)?.add(p.var(&format!("{prefix}.b"))?)
}

/// Feed-forward network with layer sizes `sizes`, stored as `{prefix}.l0 ..`.
pub fn init_mlp(store: &mut ParamStore, prefix: &str, sizes: &[usize], rng: &mut Rng) -> Result<()> {
    for (i, w) in sizes.windows(2).enumerate() {
        init_dense(store, &format!("{prefix}.l{i}"), w[0], w[1], rng)?;
    }
    Ok(())
}

/// Applies `layers` dense maps with `act` between them and none after the last.
pub fn mlp<'t>(p: &Bound<'t>, prefix: &str, layers: usize, act: Activation, x: Var<'t>) -> Result<Var<'t>> {
    let mut h = x;
    for i in 0..layers {
        h = dense(p, &format!("{prefix}.l{i}"), h)?;
        if i + 1 < layers {
            h = act.apply(h);
        }
    }
    Ok(h)
}

/// Reference evaluation of [`mlp`] on one input vector, without a tape.
pub fn mlp_eval(store: &ParamStore, prefix: &str, layers: usize, act: Activation, x: &[f64]) -> Result<Vec<f64>> {
    let mut h = x.to_vec();
    for i in 0..layers {
        let w = store.get(&format!("{prefix}.l{i}.w"))?;
        let b = store.get(&format!("{prefix}.l{i}.b"))?;
        let (fi, fo) = (w.shape()[0], w.shape()[1]);
        let mut out = b.data().to_vec();
        for (k, &hk) in h.iter().enumerate().take(fi) {
            for (o, slot) in out.iter_mut().enumerate() {
                *slot += hk * w.data()[k * fo + o];
            }
        }
        if i + 1 < layers {
            out.iter_mut().for_each(|v| *v = act.eval(*v));
        }
        h = out;
    }
    Ok(h)
}

/// Grid coordinates broadcast over a batch: `(B, s.., d)`.
pub fn batch_coords(coords: &Tensor, batch: usize) -> Result<Tensor> {
    let mut shape = vec![batch];
    shape.extend_from_slice(coords.shape());
    let mut data = Vec::with_capacity(batch * coords.len());
    for _ in 0..batch {
        data.extend_from_slice(coords.data());
    }
    Tensor::new(&shape, data)
}
