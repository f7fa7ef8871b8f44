//! Non-recording array kernels shared by `Tensor` methods and tape backward rules.

use std::cell::RefCell;
use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::Tensor;
use crate::error::{Error, Result};

/// Trailing-dimension broadcast of two shapes, `None` when they conflict.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i + a.len() >= n { a[i + a.len() - n] } else { 1 };
        let db = if i + b.len() >= n { b[i + b.len() - n] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

fn strip_leading_ones(s: &[usize]) -> &[usize] {
    let k = s.iter().take_while(|&&d| d == 1).count();
    &s[k..]
}

/// True when `small`, ignoring leading ones, equals the trailing part of `full`.
fn is_suffix(small: &[usize], full: &[usize]) -> bool {
    let s = strip_leading_ones(small);
    s.len() <= full.len() && &full[full.len() - s.len()..] == s
}

/// Strides of `in_shape` viewed as `out_shape`, zero along broadcast axes.
fn broadcast_strides(in_shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let nd = out_shape.len();
    let off = nd - in_shape.len();
    let mut strides = vec![0usize; nd];
    let mut acc = 1;
    for i in (0..in_shape.len()).rev() {
        strides[i + off] = if in_shape[i] == 1 { 0 } else { acc };
        acc *= in_shape[i];
    }
    strides
}

/// Calls `run(offset_a, offset_b, len, stride_a, stride_b)` for every innermost run of `shape`.
///
/// Adjacent axes along which both operands advance uniformly are merged
/// first, so runs are as long as the layouts allow.
fn for_each_run(shape: &[usize], sa: &[usize], sb: &[usize], mut run: impl FnMut(usize, usize, usize, usize, usize)) {
    let mut dims: Vec<(usize, usize, usize)> = Vec::with_capacity(shape.len());
    for i in 0..shape.len() {
        if shape[i] == 1 {
            continue;
        }
        if let Some(last) = dims.last_mut() {
            if last.1 == sa[i] * shape[i] && last.2 == sb[i] * shape[i] {
                *last = (last.0 * shape[i], sa[i], sb[i]);
                continue;
            }
        }
        dims.push((shape[i], sa[i], sb[i]));
    }
    let Some(&(len, ia, ib)) = dims.last() else {
        run(0, 0, 1, 0, 0);
        return;
    };
    let outer = &dims[..dims.len() - 1];
    let count: usize = outer.iter().map(|d| d.0).product();
    let mut idx = vec![0usize; outer.len()];
    let (mut oa, mut ob) = (0usize, 0usize);
    for _ in 0..count {
        run(oa, ob, len, ia, ib);
        for d in (0..outer.len()).rev() {
            idx[d] += 1;
            oa += outer[d].1;
            ob += outer[d].2;
            if idx[d] < outer[d].0 {
                break;
            }
            oa -= outer[d].1 * idx[d];
            ob -= outer[d].2 * idx[d];
            idx[d] = 0;
        }
    }
}

pub(crate) fn broadcast_binary(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    if a.shape == b.shape {
        let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
        return Ok(Tensor {
            shape: a.shape.clone(),
            data,
        });
    }
    let shape = broadcast_shape(&a.shape, &b.shape).ok_or_else(|| Error::shape(op, &a.shape, &b.shape))?;
    let mut data = Vec::with_capacity(shape.iter().product());
    let (sa, sb) = (broadcast_strides(&a.shape, &shape), broadcast_strides(&b.shape, &shape));
    for_each_run(&shape, &sa, &sb, |oa, ob, len, ia, ib| match (ia, ib) {
        (1, 1) => data.extend(a.data[oa..oa + len].iter().zip(&b.data[ob..ob + len]).map(|(&x, &y)| f(x, y))),
        (1, 0) => {
            let y = b.data[ob];
            data.extend(a.data[oa..oa + len].iter().map(|&x| f(x, y)));
        }
        (0, 1) => {
            let x = a.data[oa];
            data.extend(b.data[ob..ob + len].iter().map(|&y| f(x, y)));
        }
        _ => data.extend((0..len).map(|k| f(a.data[oa + k * ia], b.data[ob + k * ib]))),
    });
    Ok(Tensor { shape, data })
}

/// Sums `g` down to `shape`, the adjoint of broadcasting `shape` up to `g.shape`.
pub(crate) fn reduce_to(g: &Tensor, shape: &[usize]) -> Tensor {
    if g.shape == shape {
        return g.clone();
    }
    let n: usize = shape.iter().product();
    let mut data = vec![0.0; n];
    if is_suffix(shape, &g.shape) {
        for chunk in g.data.chunks_exact(n.max(1)) {
            for (d, &x) in data.iter_mut().zip(chunk) {
                *d += x;
            }
        }
    } else {
        let sg = broadcast_strides(&g.shape, &g.shape);
        let so = broadcast_strides(shape, &g.shape);
        for_each_run(&g.shape, &sg, &so, |og, oo, len, ig, io| {
            if io == 0 {
                data[oo] += (0..len).map(|k| g.data[og + k * ig]).sum::<f64>();
            } else {
                for k in 0..len {
                    data[oo + k * io] += g.data[og + k * ig];
                }
            }
        });
    }
    Tensor {
        shape: shape.to_vec(),
        data,
    }
}

/// `c = alpha * a b + beta * c` on strided row/column views.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!((m - 1) * rsc + (n - 1) * csc < c.len());
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                c[i * rsc + j * csc] *= beta;
            }
        }
        return;
    }
    assert!((m - 1) * rsa + (k - 1) * csa < a.len());
    assert!((k - 1) * rsb + (n - 1) * csb < b.len());
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

pub(crate) fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.ndim() < 2 || b.ndim() != 2 || a.shape[a.ndim() - 1] != b.shape[0] {
        return Err(Error::shape("matmul", &a.shape, &b.shape));
    }
    let k = b.shape[0];
    let n = b.shape[1];
    let m = a.data.len() / k.max(1);
    let mut shape = a.shape.clone();
    *shape.last_mut().expect("rank >= 2") = n;
    let mut data = vec![0.0; m * n];
    gemm(m, k, n, 1.0, &a.data, k, 1, &b.data, n, 1, 0.0, &mut data, n, 1);
    Ok(Tensor { shape, data })
}

pub(crate) fn bmm(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.ndim() != 3 || b.ndim() != 3 || a.shape[0] != b.shape[0] || a.shape[2] != b.shape[1] {
        return Err(Error::shape("bmm", &a.shape, &b.shape));
    }
    let (bs, m, k, n) = (a.shape[0], a.shape[1], a.shape[2], b.shape[2]);
    let mut data = vec![0.0; bs * m * n];
    for i in 0..bs {
        gemm(
            m,
            k,
            n,
            1.0,
            &a.data[i * m * k..(i + 1) * m * k],
            k,
            1,
            &b.data[i * k * n..(i + 1) * k * n],
            n,
            1,
            0.0,
            &mut data[i * m * n..(i + 1) * m * n],
            n,
            1,
        );
    }
    Ok(Tensor {
        shape: vec![bs, m, n],
        data,
    })
}

pub(crate) fn permute(t: &Tensor, perm: &[usize]) -> Result<Tensor> {
    let nd = t.ndim();
    let mut seen = vec![false; nd];
    if perm.len() != nd {
        return Err(Error::shape("permute", &t.shape, perm));
    }
    for &p in perm {
        if p >= nd || seen[p] {
            return Err(Error::shape("permute", &t.shape, perm));
        }
        seen[p] = true;
    }
    let mut in_strides = vec![1usize; nd];
    for i in (0..nd.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * t.shape[i + 1];
    }
    let shape: Vec<usize> = perm.iter().map(|&p| t.shape[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let total = t.data.len();
    let mut data = Vec::with_capacity(total);
    if nd == 0 {
        data.extend_from_slice(&t.data);
        return Ok(Tensor { shape, data });
    }
    // Innermost output axis is walked as a strided run.
    let last = nd - 1;
    let run = shape[last];
    let rstride = strides[last];
    let mut idx = vec![0usize; nd];
    let mut cur = 0usize;
    let runs = if run == 0 { 0 } else { total / run };
    for _ in 0..runs {
        for j in 0..run {
            data.push(t.data[cur + j * rstride]);
        }
        for d in (0..last).rev() {
            idx[d] += 1;
            cur += strides[d];
            if idx[d] < shape[d] {
                break;
            }
            cur -= strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    Ok(Tensor { shape, data })
}

/// Splits `shape` around `axis` into (outer, len, inner).
pub(crate) fn split_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::Axis {
            op,
            axis,
            rank: shape.len(),
        });
    }
    Ok((
        shape[..axis].iter().product(),
        shape[axis],
        shape[axis + 1..].iter().product(),
    ))
}

pub(crate) fn slice(t: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    let (outer, n, inner) = split_axis("slice", &t.shape, axis)?;
    if start + len > n {
        return Err(Error::Contract(format!(
            "slice: range {}..{} exceeds axis {} of length {}",
            start,
            start + len,
            axis,
            n
        )));
    }
    let mut data = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * n + start) * inner;
        data.extend_from_slice(&t.data[base..base + len * inner]);
    }
    let mut shape = t.shape.clone();
    shape[axis] = len;
    Ok(Tensor { shape, data })
}

/// Adjoint of `slice`: embeds `t` into zeros of length `n` along `axis`.
pub(crate) fn pad_axis(t: &Tensor, axis: usize, start: usize, n: usize) -> Tensor {
    let (outer, len, inner) = split_axis("pad", &t.shape, axis).expect("valid axis");
    let mut shape = t.shape.clone();
    shape[axis] = n;
    let mut data = vec![0.0; outer * n * inner];
    for o in 0..outer {
        let dst = (o * n + start) * inner;
        data[dst..dst + len * inner].copy_from_slice(&t.data[o * len * inner..(o + 1) * len * inner]);
    }
    Tensor { shape, data }
}

pub(crate) fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
    let (outer, _, inner) = split_axis("concat", &first.shape, axis)?;
    let mut total = 0;
    for p in parts {
        let same_rank = p.ndim() == first.ndim();
        let same_other = same_rank
            && p.shape
                .iter()
                .zip(&first.shape)
                .enumerate()
                .all(|(i, (a, b))| i == axis || a == b);
        if !same_other {
            return Err(Error::shape("concat", &first.shape, &p.shape));
        }
        total += p.shape[axis];
    }
    let mut data = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for p in parts {
            let w = p.shape[axis] * inner;
            data.extend_from_slice(&p.data[o * w..(o + 1) * w]);
        }
    }
    let mut shape = first.shape.clone();
    shape[axis] = total;
    Ok(Tensor { shape, data })
}

pub(crate) fn gather(t: &Tensor, axis: usize, index: &[usize]) -> Result<Tensor> {
    let (outer, n, inner) = split_axis("gather", &t.shape, axis)?;
    if let Some(&bad) = index.iter().find(|&&i| i >= n) {
        return Err(Error::Contract(format!(
            "gather: index {} out of range for axis {} of length {}",
            bad, axis, n
        )));
    }
    let mut data = Vec::with_capacity(outer * index.len() * inner);
    for o in 0..outer {
        for &i in index {
            let base = (o * n + i) * inner;
            data.extend_from_slice(&t.data[base..base + inner]);
        }
    }
    let mut shape = t.shape.clone();
    shape[axis] = index.len();
    Ok(Tensor { shape, data })
}

pub(crate) fn scatter_add(t: &Tensor, axis: usize, index: &[usize], size: usize) -> Result<Tensor> {
    let (outer, n, inner) = split_axis("scatter_add", &t.shape, axis)?;
    if n != index.len() {
        return Err(Error::shape("scatter_add", &t.shape, &[index.len()]));
    }
    if let Some(&bad) = index.iter().find(|&&i| i >= size) {
        return Err(Error::Contract(format!(
            "scatter_add: index {} out of range for target length {}",
            bad, size
        )));
    }
    let mut data = vec![0.0; outer * size * inner];
    for o in 0..outer {
        for (j, &i) in index.iter().enumerate() {
            let src = (o * n + j) * inner;
            let dst = (o * size + i) * inner;
            for (d, s) in data[dst..dst + inner].iter_mut().zip(&t.data[src..src + inner]) {
                *d += s;
            }
        }
    }
    let mut shape = t.shape.clone();
    shape[axis] = size;
    Ok(Tensor { shape, data })
}

pub(crate) fn sum_axis(t: &Tensor, axis: usize) -> Result<Tensor> {
    let (outer, n, inner) = split_axis("sum_axis", &t.shape, axis)?;
    let mut data = vec![0.0; outer * inner];
    for o in 0..outer {
        let dst = &mut data[o * inner..(o + 1) * inner];
        for i in 0..n {
            let src = &t.data[(o * n + i) * inner..(o * n + i + 1) * inner];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    let mut shape = t.shape.clone();
    shape[axis] = 1;
    Ok(Tensor { shape, data })
}

/// Broadcasts a keepdim reduction result back along `axis` of length `n`.
pub(crate) fn expand_axis(t: &Tensor, axis: usize, n: usize) -> Tensor {
    let (outer, _, inner) = split_axis("expand", &t.shape, axis).expect("valid axis");
    let mut data = Vec::with_capacity(outer * n * inner);
    for o in 0..outer {
        for _ in 0..n {
            data.extend_from_slice(&t.data[o * inner..(o + 1) * inner]);
        }
    }
    let mut shape = t.shape.clone();
    shape[axis] = n;
    Tensor { shape, data }
}

/// Keepdim max along `axis` and the flat position of each winner in `t`.
pub(crate) fn max_axis(t: &Tensor, axis: usize) -> Result<(Tensor, Vec<usize>)> {
    let (outer, n, inner) = split_axis("max_axis", &t.shape, axis)?;
    if n == 0 {
        return Err(Error::Contract("max over an empty axis".into()));
    }
    let mut data = vec![f64::NEG_INFINITY; outer * inner];
    let mut arg = vec![0usize; outer * inner];
    for o in 0..outer {
        for i in 0..n {
            for j in 0..inner {
                let pos = (o * n + i) * inner + j;
                let v = t.data[pos];
                let slot = o * inner + j;
                if i == 0 || v > data[slot] {
                    data[slot] = v;
                    arg[slot] = pos;
                }
            }
        }
    }
    let mut shape = t.shape.clone();
    shape[axis] = 1;
    Ok((Tensor { shape, data }, arg))
}

fn check_complex(op: &'static str, t: &Tensor) -> Result<()> {
    if t.shape.last() != Some(&2) {
        return Err(Error::Contract(format!(
            "{op}: expected a complex tensor (trailing axis of length 2), got shape {:?}",
            t.shape
        )));
    }
    Ok(())
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// DFT over the given axes of a complex tensor; inverse is scaled by `1 / prod(n)`.
pub(crate) fn fft(t: &Tensor, axes: &[usize], inverse: bool) -> Result<Tensor> {
    check_complex(if inverse { "ifft" } else { "fft" }, t)?;
    let rank = t.ndim() - 1;
    for &a in axes {
        if a >= rank {
            return Err(Error::Axis {
                op: if inverse { "ifft" } else { "fft" },
                axis: a,
                rank,
            });
        }
    }
    let mut out = t.clone();
    let mut buf: Vec<Complex64> = Vec::new();
    for &axis in axes {
        let outer: usize = t.shape[..axis].iter().product();
        let n = t.shape[axis];
        let inner: usize = t.shape[axis + 1..rank].iter().product();
        if n <= 1 {
            continue;
        }
        let plan = PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            if inverse {
                p.plan_fft_inverse(n)
            } else {
                p.plan_fft_forward(n)
            }
        });
        buf.clear();
        buf.resize(outer * inner * n, Complex64::new(0.0, 0.0));
        for o in 0..outer {
            for i in 0..inner {
                let line = &mut buf[(o * inner + i) * n..(o * inner + i + 1) * n];
                for (x, c) in line.iter_mut().enumerate() {
                    let p = ((o * n + x) * inner + i) * 2;
                    *c = Complex64::new(out.data[p], out.data[p + 1]);
                }
            }
        }
        plan.process(&mut buf);
        let scale = if inverse { 1.0 / n as f64 } else { 1.0 };
        for o in 0..outer {
            for i in 0..inner {
                let line = &buf[(o * inner + i) * n..(o * inner + i + 1) * n];
                for (x, c) in line.iter().enumerate() {
                    let p = ((o * n + x) * inner + i) * 2;
                    out.data[p] = c.re * scale;
                    out.data[p + 1] = c.im * scale;
                }
            }
        }
    }
    Ok(out)
}

/// Matrix of a partial DFT along one axis, stacked as `[real rows; imaginary rows]`.
///
/// Forward: `A[k, x] = scale * exp(-2 pi i f_k x / n)`, shape `(freqs, n)`.
/// Inverse: `A[x, k] = scale * exp(+2 pi i f_k x / n)`, shape `(n, freqs)`.
fn dft_matrix(freqs: &[i64], n: usize, inverse: bool, scale: f64) -> (Vec<f64>, usize, usize) {
    let nf = freqs.len();
    let (rows, cols) = if inverse { (n, nf) } else { (nf, n) };
    let mut m = vec![0.0; 2 * rows * cols];
    let sign = if inverse { 1.0 } else { -1.0 };
    for (kk, &f) in freqs.iter().enumerate() {
        for x in 0..n {
            let r = (f * x as i64).rem_euclid(n as i64) as f64;
            let th = 2.0 * PI * r / n as f64;
            let (re, im) = (scale * th.cos(), sign * scale * th.sin());
            let (row, col) = if inverse { (x, kk) } else { (kk, x) };
            m[row * cols + col] = re;
            m[(rows + row) * cols + col] = im;
        }
    }
    (m, rows, cols)
}

/// Applies a partial DFT along `axis` of a complex tensor.
///
/// Forward keeps only the signed frequencies `freqs`; inverse synthesizes a
/// length-`n` signal from coefficients at `freqs`. Equals fft/ifft followed
/// or preceded by mode selection, at a cost linear in `freqs.len()`.
pub(crate) fn dft_axis(
    t: &Tensor,
    axis: usize,
    freqs: &[i64],
    n: usize,
    inverse: bool,
    scale: f64,
) -> Result<Tensor> {
    check_complex("dft", t)?;
    let rank = t.ndim() - 1;
    if axis >= rank {
        return Err(Error::Axis { op: "dft", axis, rank });
    }
    let expect_in = if inverse { freqs.len() } else { n };
    if t.shape[axis] != expect_in {
        return Err(Error::shape("dft", &t.shape, &[expect_in]));
    }
    let (mat, rows, cols) = dft_matrix(freqs, n, inverse, scale);
    let outer: usize = t.shape[..axis].iter().product();
    let inner2: usize = t.shape[axis + 1..].iter().product();
    let mut shape = t.shape.clone();
    shape[axis] = rows;
    let mut data = vec![0.0; outer * rows * inner2];
    let mut pq = vec![0.0; 2 * rows * inner2];
    for o in 0..outer {
        let x = &t.data[o * cols * inner2..(o + 1) * cols * inner2];
        gemm(2 * rows, cols, inner2, 1.0, &mat, cols, 1, x, inner2, 1, 0.0, &mut pq, inner2, 1);
        let y = &mut data[o * rows * inner2..(o + 1) * rows * inner2];
        let (p, q) = pq.split_at(rows * inner2);
        for j in (0..rows * inner2).step_by(2) {
            y[j] = p[j] - q[j + 1];
            y[j + 1] = p[j + 1] + q[j];
        }
    }
    Ok(Tensor { shape, data })
}

pub(crate) fn complex_from_real(t: &Tensor) -> Tensor {
    let mut shape = t.shape.clone();
    shape.push(2);
    let mut data = Vec::with_capacity(t.data.len() * 2);
    for &x in &t.data {
        data.push(x);
        data.push(0.0);
    }
    Tensor { shape, data }
}

pub(crate) fn complex_part(t: &Tensor, which: usize) -> Result<Tensor> {
    check_complex("complex_part", t)?;
    let shape = t.shape[..t.ndim() - 1].to_vec();
    let data = t.data.chunks_exact(2).map(|c| c[which]).collect();
    Ok(Tensor { shape, data })
}

pub(crate) fn conj(t: &Tensor) -> Result<Tensor> {
    check_complex("conj", t)?;
    let mut out = t.clone();
    for c in out.data.chunks_exact_mut(2) {
        c[1] = -c[1];
    }
    Ok(out)
}

/// Complex elementwise product `a * b` (or `a * conj(b)`), broadcasting the non-complex axes.
pub(crate) fn cmul(a: &Tensor, b: &Tensor, conj_b: bool) -> Result<Tensor> {
    check_complex("cmul", a)?;
    check_complex("cmul", b)?;
    let sa = &a.shape[..a.ndim() - 1];
    let sb = &b.shape[..b.ndim() - 1];
    let base = broadcast_shape(sa, sb).ok_or_else(|| Error::shape("cmul", &a.shape, &b.shape))?;
    let sgn = if conj_b { -1.0 } else { 1.0 };
    let mul = |ar: f64, ai: f64, br: f64, bi: f64| {
        let bi = sgn * bi;
        (ar * br - ai * bi, ar * bi + ai * br)
    };
    let total: usize = base.iter().product();
    let mut data = Vec::with_capacity(2 * total);
    if sa == sb {
        for (x, y) in a.data.chunks_exact(2).zip(b.data.chunks_exact(2)) {
            let (re, im) = mul(x[0], x[1], y[0], y[1]);
            data.push(re);
            data.push(im);
        }
    } else {
        let (ta, tb) = (broadcast_strides(sa, &base), broadcast_strides(sb, &base));
        for_each_run(&base, &ta, &tb, |oa, ob, len, ia, ib| {
            for k in 0..len {
                let (i, j) = (oa + k * ia, ob + k * ib);
                let (re, im) = mul(a.data[2 * i], a.data[2 * i + 1], b.data[2 * j], b.data[2 * j + 1]);
                data.push(re);
                data.push(im);
            }
        });
    }
    let mut shape = base;
    shape.push(2);
    Ok(Tensor { shape, data })
}

/// Real `(2I, 2O)` matrix of mode `k` acting on interleaved complex rows: `[xr xi] -> x r`.
fn real_block(r: &Tensor, k: usize, ci: usize, co: usize, out: &mut [f64]) {
    for i in 0..ci {
        let row = &r.data[((k * ci + i) * co) * 2..((k * ci + i + 1) * co) * 2];
        let (top, bottom) = out[(2 * i) * 2 * co..(2 * i + 2) * 2 * co].split_at_mut(2 * co);
        for (o, c) in row.chunks_exact(2).enumerate() {
            top[2 * o] = c[0];
            top[2 * o + 1] = c[1];
            bottom[2 * o] = -c[1];
            bottom[2 * o + 1] = c[0];
        }
    }
}

fn check_cmode(x: &Tensor, r: &Tensor) -> Result<(usize, usize, usize, usize)> {
    let ok = x.ndim() == 4
        && r.ndim() == 4
        && x.shape[3] == 2
        && r.shape[3] == 2
        && x.shape[1] == r.shape[0]
        && x.shape[2] == r.shape[1];
    if !ok {
        return Err(Error::shape("cmode_matmul", &x.shape, &r.shape));
    }
    Ok((x.shape[0], x.shape[1], x.shape[2], r.shape[2]))
}

/// Per-mode complex channel mixing: `x (B, M, I, 2)`, `r (M, I, O, 2)` to `(B, M, O, 2)`.
pub(crate) fn cmode_matmul(x: &Tensor, r: &Tensor) -> Result<Tensor> {
    let (bs, m, ci, co) = check_cmode(x, r)?;
    let mut data = vec![0.0; bs * m * co * 2];
    let mut blk = vec![0.0; 4 * ci * co];
    for k in 0..m {
        real_block(r, k, ci, co, &mut blk);
        // Rows are batch samples, strided by the whole mode block.
        gemm(
            bs,
            2 * ci,
            2 * co,
            1.0,
            &x.data[k * ci * 2..],
            m * ci * 2,
            1,
            &blk,
            2 * co,
            1,
            0.0,
            &mut data[k * co * 2..],
            m * co * 2,
            1,
        );
    }
    Ok(Tensor {
        shape: vec![bs, m, co, 2],
        data,
    })
}

/// Gradients of `cmode_matmul` for a real loss: `(g conj(r), conj(x) g)`.
pub(crate) fn cmode_matmul_backward(x: &Tensor, r: &Tensor, g: &Tensor) -> (Tensor, Tensor) {
    let (bs, m, ci, co) = (x.shape[0], x.shape[1], x.shape[2], r.shape[2]);
    let mut gx = vec![0.0; x.data.len()];
    let mut gr = vec![0.0; r.data.len()];
    let mut blk = vec![0.0; 4 * ci * co];
    let mut gblk = vec![0.0; 4 * ci * co];
    for k in 0..m {
        real_block(r, k, ci, co, &mut blk);
        let gk = &g.data[k * co * 2..];
        // gx = g blk^T
        gemm(bs, 2 * co, 2 * ci, 1.0, gk, m * co * 2, 1, &blk, 1, 2 * co, 0.0, &mut gx[k * ci * 2..], m * ci * 2, 1);
        // gblk = x^T g
        gemm(2 * ci, bs, 2 * co, 1.0, &x.data[k * ci * 2..], 1, m * ci * 2, gk, m * co * 2, 1, 0.0, &mut gblk, 2 * co, 1);
        for i in 0..ci {
            let top = &gblk[(2 * i) * 2 * co..(2 * i + 1) * 2 * co];
            let bottom = &gblk[(2 * i + 1) * 2 * co..(2 * i + 2) * 2 * co];
            let row = &mut gr[((k * ci + i) * co) * 2..((k * ci + i + 1) * co) * 2];
            for o in 0..co {
                row[2 * o] = top[2 * o] + bottom[2 * o + 1];
                row[2 * o + 1] = top[2 * o + 1] - bottom[2 * o];
            }
        }
    }
    (
        Tensor {
            shape: x.shape.clone(),
            data: gx,
        },
        Tensor {
            shape: r.shape.clone(),
            data: gr,
        },
    )
}
