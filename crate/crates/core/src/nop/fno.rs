use std::rc::Rc;

use super::layers::{dense, Activation};
use super::params::{Bound, ParamStore};
use crate::error::{Error, Result};
use crate::random::Rng;
use crate::spectral::{self, signed_freqs, ModeSet};
use crate::tensor::{Tensor, Var};

/// Number of stored modes for per-axis cutoffs `kmax`.
pub fn mode_count(kmax: &[usize]) -> usize {
    kmax.iter().map(|k| 2 * k).product()
}

/// Adds `{prefix}.r (|modes|, width, width, 2)` with entries `uniform(-1/width, 1/width)`.
pub fn init_modes(store: &mut ParamStore, prefix: &str, kmax: &[usize], width: usize, rng: &mut Rng) -> Result<()> {
    let m = mode_count(kmax);
    store.insert_uniform(format!("{prefix}.r"), &[m, width, width, 2], 1.0 / width as f64, rng)
}

/// `R(-k) = conj(R(k))` projection of a `(M, I, O, 2)` block; unpaired modes are zeroed.
pub fn symmetric_modes<'t>(r: Var<'t>, kmax: &[usize]) -> Result<Var<'t>> {
    let (index, mask) = spectral::symmetry_plan(kmax);
    let m = index.len();
    if r.shape()[0] != m {
        return Err(Error::shape("symmetric_modes", &r.shape(), &[m]));
    }
    let flipped = r.gather(0, Rc::from(index))?.conj()?;
    let mask = r.tape().constant(Tensor::new(&[m, 1, 1, 1], mask)?.scale(0.5));
    r.add(flipped)?.mul(mask)
}

/// `ifft(pad(R . truncate(fft(v))))` over the spatial axes of `v (B, s_1.., s_d, C)`.
///
/// Mode truncation is evaluated as a partial DFT, so the cost is linear in the
/// number of retained modes and no full spectrum is materialized.
pub fn spectral_conv<'t>(r: Var<'t>, kmax: &[usize], v: Var<'t>) -> Result<Var<'t>> {
    let shape = v.shape();
    let d = kmax.len();
    if shape.len() != d + 2 {
        return Err(Error::Config(format!(
            "spectral layer with {d} mode axes got field of shape {shape:?}"
        )));
    }
    let sizes = &shape[1..=d];
    ModeSet::new(sizes, kmax)?;
    let (b, c) = (shape[0], shape[d + 1]);
    let rs = r.shape();
    if rs[1] != c {
        return Err(Error::shape("spectral_conv", &shape, &rs));
    }
    let out_c = rs[2];
    let freqs: Vec<Rc<[i64]>> = kmax.iter().map(|&k| Rc::from(signed_freqs(k))).collect();
    let mut x = v.to_complex();
    for (j, f) in freqs.iter().enumerate() {
        x = x.dft_modes(1 + j, f.clone())?;
    }
    let m = mode_count(kmax);
    let y = x.reshape(&[b, m, c, 2])?.cmode_matmul(symmetric_modes(r, kmax)?)?;
    let mut block = vec![b];
    block.extend(kmax.iter().map(|k| 2 * k));
    block.extend([out_c, 2]);
    let mut y = y.reshape(&block)?;
    for j in (0..d).rev() {
        y = y.idft_modes(1 + j, freqs[j].clone(), sizes[j])?;
    }
    y.real_part()
}

/// One Fourier layer `act(W v + b + K v)`; `pad` zeros are appended to the last spatial axis around `K`.
pub fn fno_layer<'t>(p: &Bound<'t>, prefix: &str, kmax: &[usize], pad: usize, act: Activation, v: Var<'t>) -> Result<Var<'t>> {
    let r = p.var(&format!("{prefix}.r"))?;
    let k = if pad == 0 {
        spectral_conv(r, kmax, v)?
    } else {
        let shape = v.shape();
        let axis = shape.len() - 2;
        let mut zshape = shape.clone();
        zshape[axis] = pad;
        let zeros = v.tape().constant(Tensor::zeros(&zshape));
        let padded = v.tape().concat(&[v, zeros], axis)?;
        spectral_conv(r, kmax, padded)?.slice(axis, 0, shape[axis])?
    };
    Ok(act.apply(dense(p, &format!("{prefix}.lin"), v)?.add(k)?))
}
