//! Fourier transforms, retained-mode bookkeeping for Fourier layers, and energy spectra.
//!
//! The forward transform is unnormalized with kernel `exp(-2 pi i x k / s)`;
//! the inverse carries the `1 / prod(s)` factor. Weights defined on signed
//! frequencies therefore act identically on any grid that resolves them.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::{Tensor, Var};

/// Forward DFT over `axes` of a complex tensor.
pub fn fft(v: &Tensor, axes: &[usize]) -> Result<Tensor> {
    v.fft(axes)
}

/// Normalized inverse DFT over `axes` of a complex tensor.
pub fn ifft(w: &Tensor, axes: &[usize]) -> Result<Tensor> {
    w.ifft(axes)
}

/// Forward DFT of a real tensor over `axes`.
pub fn fft_real(v: &Tensor, axes: &[usize]) -> Result<Tensor> {
    v.to_complex().fft(axes)
}

/// Retained Fourier modes: per axis, `{0, .., kmax-1}` and `{s-kmax, .., s-1}`.
///
/// Retained multi-indices are ordered row-major over the per-axis lists,
/// each list running through signed frequencies `0, 1, .., kmax-1, -kmax, .., -1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModeSet {
    sizes: Vec<usize>,
    kmax: Vec<usize>,
}

impl ModeSet {
    pub fn new(sizes: &[usize], kmax: &[usize]) -> Result<Self> {
        if sizes.len() != kmax.len() || sizes.is_empty() {
            return Err(Error::Config(format!(
                "mode cutoffs {:?} do not match grid sizes {:?}",
                kmax, sizes
            )));
        }
        for (j, (&s, &k)) in sizes.iter().zip(kmax).enumerate() {
            if k == 0 {
                return Err(Error::Config(format!("mode cutoff on axis {j} must be positive")));
            }
            if 2 * k >= s {
                return Err(Error::Config(format!(
                    "mode cutoff {k} on axis {j} needs 2*kmax < s, but s = {s}"
                )));
            }
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            kmax: kmax.to_vec(),
        })
    }

    pub fn dims(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn kmax(&self) -> &[usize] {
        &self.kmax
    }

    /// Number of retained modes, `prod(2 * kmax_j)`.
    pub fn len(&self) -> usize {
        self.kmax.iter().map(|k| 2 * k).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Signed retained frequencies along `axis`.
    pub fn freqs(&self, axis: usize) -> Vec<i64> {
        signed_freqs(self.kmax[axis])
    }

    /// Retained grid indices along `axis`.
    pub fn indices(&self, axis: usize) -> Vec<usize> {
        let s = self.sizes[axis] as i64;
        self.freqs(axis).iter().map(|&f| f.rem_euclid(s) as usize).collect()
    }

    /// All retained multi-indices in storage order.
    pub fn multi_indices(&self) -> Vec<Vec<usize>> {
        let per_axis: Vec<Vec<usize>> = (0..self.dims()).map(|j| self.indices(j)).collect();
        cartesian(&per_axis)
    }

    /// For each retained mode, the position of `-k` in the set, if retained.
    pub fn negation_map(&self) -> Vec<Option<usize>> {
        negation_map(&self.kmax)
    }
}

/// `0, 1, .., k-1, -k, .., -1`.
pub fn signed_freqs(kmax: usize) -> Vec<i64> {
    let k = kmax as i64;
    (0..k).chain(-k..0).collect()
}

fn cartesian(lists: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for list in lists {
        let mut next = Vec::with_capacity(out.len() * list.len());
        for prefix in &out {
            for &i in list {
                let mut p = prefix.clone();
                p.push(i);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Negation map over the signed-frequency mode block for per-axis cutoffs `kmax`.
pub fn negation_map(kmax: &[usize]) -> Vec<Option<usize>> {
    let per_axis: Vec<Vec<Option<usize>>> = kmax
        .iter()
        .map(|&k| {
            let f = signed_freqs(k);
            f.iter().map(|&x| f.iter().position(|&y| y == -x)).collect()
        })
        .collect();
    let widths: Vec<usize> = kmax.iter().map(|k| 2 * k).collect();
    let total: usize = widths.iter().product();
    (0..total)
        .map(|flat| {
            let mut rem = flat;
            let mut idx = vec![0; widths.len()];
            for j in (0..widths.len()).rev() {
                idx[j] = rem % widths[j];
                rem /= widths[j];
            }
            let mut out = 0;
            for j in 0..widths.len() {
                out = out * widths[j] + per_axis[j][idx[j]]?;
            }
            Some(out)
        })
        .collect()
}

fn check_axes(ms: &ModeSet, shape: &[usize], axes: &[usize]) -> Result<()> {
    if axes.len() != ms.dims() {
        return Err(Error::Config(format!(
            "mode set has {} axes but {} transform axes were given",
            ms.dims(),
            axes.len()
        )));
    }
    for (j, &a) in axes.iter().enumerate() {
        if a + 1 >= shape.len() {
            return Err(Error::Axis {
                op: "modes",
                axis: a,
                rank: shape.len().saturating_sub(1),
            });
        }
        if shape[a] != ms.sizes[j] {
            return Err(Error::Config(format!(
                "grid size {} on axis {a} does not match mode set size {}",
                shape[a], ms.sizes[j]
            )));
        }
    }
    Ok(())
}

/// Keeps the retained modes of a full spectrum, shrinking each axis to `2 * kmax`.
pub fn truncate_modes(w: &Tensor, ms: &ModeSet, axes: &[usize]) -> Result<Tensor> {
    check_axes(ms, w.shape(), axes)?;
    let mut out = w.clone();
    for (j, &a) in axes.iter().enumerate() {
        out = out.gather(a, &ms.indices(j))?;
    }
    Ok(out)
}

/// Zero-fills a retained-mode block back to the full spectrum.
pub fn pad_modes(block: &Tensor, ms: &ModeSet, axes: &[usize]) -> Result<Tensor> {
    let mut out = block.clone();
    for (j, &a) in axes.iter().enumerate() {
        out = out.scatter_add(a, &ms.indices(j), ms.sizes[j])?;
    }
    Ok(out)
}

/// Recording counterpart of [`truncate_modes`].
pub fn truncate_modes_var<'t>(w: Var<'t>, ms: &ModeSet, axes: &[usize]) -> Result<Var<'t>> {
    check_axes(ms, &w.shape(), axes)?;
    let mut out = w;
    for (j, &a) in axes.iter().enumerate() {
        out = out.gather(a, Rc::from(ms.indices(j)))?;
    }
    Ok(out)
}

/// Recording counterpart of [`pad_modes`].
pub fn pad_modes_var<'t>(block: Var<'t>, ms: &ModeSet, axes: &[usize]) -> Result<Var<'t>> {
    let mut out = block;
    for (j, &a) in axes.iter().enumerate() {
        out = out.scatter_add(a, Rc::from(ms.indices(j)), ms.sizes[j])?;
    }
    Ok(out)
}

/// Index and mask used to symmetrize a mode block: unpaired modes point at themselves with mask 0.
pub(crate) fn symmetry_plan(kmax: &[usize]) -> (Vec<usize>, Vec<f64>) {
    let neg = negation_map(kmax);
    let index = neg.iter().enumerate().map(|(i, n)| n.unwrap_or(i)).collect();
    let mask = neg.iter().map(|n| if n.is_some() { 1.0 } else { 0.0 }).collect();
    (index, mask)
}

/// Projects a complex mode block `(|modes|, ..., 2)` onto blocks with `R(-k) = conj(R(k))`.
///
/// Paired modes become `(R(k) + conj(R(-k))) / 2`; modes whose negation is
/// not retained are set to zero. Self-conjugate modes come out real.
pub fn enforce_conjugate_symmetry(r: &Tensor, ms: &ModeSet) -> Result<Tensor> {
    if r.ndim() < 2 || r.shape()[0] != ms.len() || r.shape().last() != Some(&2) {
        return Err(Error::shape("enforce_conjugate_symmetry", r.shape(), &[ms.len(), 2]));
    }
    let (index, mask) = symmetry_plan(ms.kmax());
    let flipped = r.gather(0, &index)?.conj()?;
    let avg = r.add(&flipped)?.scale(0.5);
    let mut out = avg;
    let inner = r.len() / ms.len();
    for (m, &keep) in mask.iter().enumerate() {
        if keep == 0.0 {
            out.data_mut()[m * inner..(m + 1) * inner].fill(0.0);
        }
    }
    Ok(out)
}

/// Mean modal magnitude binned by `|k| = |k1| + |k2|` with signed frequencies.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumProfile {
    pub wavenumbers: Vec<usize>,
    pub magnitude: Vec<f64>,
}

impl SpectrumProfile {
    /// Two columns, `wavenumber magnitude`, one bin per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, m) in self.wavenumbers.iter().zip(&self.magnitude) {
            s.push_str(&format!("{k} {m:.12e}\n"));
        }
        s
    }

    /// Least-squares slope of `log magnitude` against `log |k|` over bins in `[lo, hi]`.
    pub fn fit_slope(&self, lo: usize, hi: usize) -> Result<f64> {
        let pts: Vec<(f64, f64)> = self
            .wavenumbers
            .iter()
            .zip(&self.magnitude)
            .filter(|(&k, &m)| k >= lo && k <= hi && k > 0 && m > 0.0)
            .map(|(&k, &m)| ((k as f64).ln(), m.ln()))
            .collect();
        if pts.len() < 2 {
            return Err(Error::Numeric(format!(
                "spectral fit over [{lo}, {hi}] has {} usable bins",
                pts.len()
            )));
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        Ok(sxy / sxx)
    }
}

/// Spectrum of a real periodic 2-D field given as `(s, s)` or `(s, s, 1)`.
///
/// Magnitudes are `|fft(w)(k)| / s^2`, averaged within each `|k|` bin.
pub fn spectrum(field: &Tensor) -> Result<SpectrumProfile> {
    let sh = field.shape();
    let square = match sh {
        [a, b] => a == b,
        [a, b, 1] => a == b,
        _ => false,
    };
    if !square {
        return Err(Error::Config(format!("spectrum needs a square 2-D field, got shape {:?}", sh)));
    }
    let s = sh[0];
    let w = field.reshape(&[s, s])?.to_complex().fft(&[0, 1])?;
    let signed = |i: usize| -> usize {
        let i = i as i64;
        let s = s as i64;
        (if i <= s / 2 { i } else { s - i }) as usize
    };
    let maxbin = 2 * (s / 2);
    let mut sum = vec![0.0; maxbin + 1];
    let mut count = vec![0usize; maxbin + 1];
    let norm = (s * s) as f64;
    for i in 0..s {
        for j in 0..s {
            let p = (i * s + j) * 2;
            let mag = w.data()[p].hypot(w.data()[p + 1]) / norm;
            let bin = signed(i) + signed(j);
            sum[bin] += mag;
            count[bin] += 1;
        }
    }
    let (wavenumbers, magnitude) = (0..=maxbin)
        .filter(|&b| count[b] > 0)
        .map(|b| (b, sum[b] / count[b] as f64))
        .unzip();
    Ok(SpectrumProfile { wavenumbers, magnitude })
}
