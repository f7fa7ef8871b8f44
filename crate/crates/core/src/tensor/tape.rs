use std::cell::{Cell, RefCell};
use std::collections::BTreeMap;
use std::rc::Rc;

use super::kernels::{self, reduce_to};
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    MatMul(usize, usize),
    Bmm(usize, usize),
    Reshape(usize),
    Permute(usize, Vec<usize>),
    Slice { x: usize, axis: usize, start: usize },
    Concat { xs: Vec<usize>, axis: usize },
    Gather { x: usize, axis: usize, index: Rc<[usize]> },
    ScatterAdd { x: usize, axis: usize, index: Rc<[usize]> },
    Sum(usize),
    SumAxis(usize, usize),
    MaxAxis { x: usize, arg: Vec<usize> },
    Relu(usize),
    Gelu(usize),
    Tanh(usize),
    Exp(usize),
    Log(usize),
    Sqrt(usize),
    Cmul(usize, usize),
    Conj(usize),
    CmodeMatmul(usize, usize),
    Fft { x: usize, axes: Vec<usize>, inverse: bool },
    Dft { x: usize, axis: usize, freqs: Rc<[i64]>, n: usize, inverse: bool },
    ToComplex(usize),
    RealPart(usize),
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Records operations in execution order for a single reverse sweep.
///
/// A tape belongs to one thread. `backward` may run once per tape.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    consumed: Cell<bool>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// Gradients of a scalar loss with respect to every differentiable leaf.
#[derive(Debug, Default)]
pub struct Gradients {
    grads: BTreeMap<usize, Tensor>,
}

impl Gradients {
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(&v.id)
    }

    /// Gradient of `v`, panicking if `v` is not a differentiable leaf.
    pub fn wrt(&self, v: Var<'_>) -> &Tensor {
        self.get(v).expect("variable is not a differentiable leaf")
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let op = if requires_grad { op } else { Op::Leaf };
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Input that receives no gradient.
    pub fn constant(&self, t: Tensor) -> Var<'_> {
        self.push(t, Op::Leaf, false)
    }

    /// Differentiable input.
    pub fn leaf(&self, t: Tensor) -> Var<'_> {
        self.push(t, Op::Leaf, true)
    }

    fn value(&self, id: usize) -> Rc<Tensor> {
        self.nodes.borrow()[id].value.clone()
    }

    fn requires(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    pub fn concat<'t>(&'t self, parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let values: Vec<Rc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let refs: Vec<&Tensor> = values.iter().map(|v| v.as_ref()).collect();
        let out = kernels::concat(&refs, axis)?;
        let rg = parts.iter().any(|p| p.requires_grad());
        let xs = parts.iter().map(|p| p.id).collect();
        Ok(self.push(out, Op::Concat { xs, axis }, rg))
    }

    /// Reverse sweep from a single-element `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if self.consumed.replace(true) {
            return Err(Error::Unsupported(
                "backward was already run on this tape (double backward)".into(),
            ));
        }
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::new();
        grads.resize_with(loss.id + 1, || None);
        grads[loss.id] = Some(Tensor::ones(root.value.shape()));
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            backprop(&nodes, node, &g, &mut grads)?;
        }
        let mut out = Gradients::default();
        for (id, node) in nodes.iter().enumerate() {
            if node.requires_grad && matches!(node.op, Op::Leaf) {
                let g = grads
                    .get_mut(id)
                    .and_then(Option::take)
                    .unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                out.grads.insert(id, g);
            }
        }
        Ok(out)
    }
}

fn accumulate(nodes: &[Node], grads: &mut [Option<Tensor>], id: usize, g: Tensor) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut grads[id] {
        Some(acc) => {
            for (a, b) in acc.data.iter_mut().zip(&g.data) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    }
}

fn inverse_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

fn backprop(nodes: &[Node], node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
    let val = |i: usize| nodes[i].value.as_ref();
    let need = |i: usize| nodes[i].requires_grad;
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            if need(*a) {
                accumulate(nodes, grads, *a, reduce_to(g, val(*a).shape()));
            }
            if need(*b) {
                accumulate(nodes, grads, *b, reduce_to(g, val(*b).shape()));
            }
        }
        Op::Sub(a, b) => {
            if need(*a) {
                accumulate(nodes, grads, *a, reduce_to(g, val(*a).shape()));
            }
            if need(*b) {
                accumulate(nodes, grads, *b, reduce_to(&g.scale(-1.0), val(*b).shape()));
            }
        }
        Op::Mul(a, b) => {
            if need(*a) {
                let t = kernels::broadcast_binary("mul", g, val(*b), |x, y| x * y)?;
                accumulate(nodes, grads, *a, reduce_to(&t, val(*a).shape()));
            }
            if need(*b) {
                let t = kernels::broadcast_binary("mul", g, val(*a), |x, y| x * y)?;
                accumulate(nodes, grads, *b, reduce_to(&t, val(*b).shape()));
            }
        }
        Op::Div(a, b) => {
            if need(*a) {
                let t = kernels::broadcast_binary("div", g, val(*b), |x, y| x / y)?;
                accumulate(nodes, grads, *a, reduce_to(&t, val(*a).shape()));
            }
            if need(*b) {
                // d(a/b)/db = -(a/b)/b, and node.value holds a/b.
                let q = kernels::broadcast_binary("mul", g, &node.value, |x, y| x * y)?;
                let t = kernels::broadcast_binary("div", &q, val(*b), |x, y| -x / y)?;
                accumulate(nodes, grads, *b, reduce_to(&t, val(*b).shape()));
            }
        }
        Op::Scale(a, c) => accumulate(nodes, grads, *a, g.scale(*c)),
        Op::AddScalar(a) => accumulate(nodes, grads, *a, g.clone()),
        Op::MatMul(a, b) => {
            let (ta, tb) = (val(*a), val(*b));
            let (k, n) = (tb.shape[0], tb.shape[1]);
            let m = ta.len() / k.max(1);
            if need(*a) {
                let mut d = vec![0.0; m * k];
                kernels::gemm(m, n, k, 1.0, &g.data, n, 1, &tb.data, 1, n, 0.0, &mut d, k, 1);
                accumulate(nodes, grads, *a, Tensor::new(ta.shape(), d)?);
            }
            if need(*b) {
                let mut d = vec![0.0; k * n];
                kernels::gemm(k, m, n, 1.0, &ta.data, 1, k, &g.data, n, 1, 0.0, &mut d, n, 1);
                accumulate(nodes, grads, *b, Tensor::new(tb.shape(), d)?);
            }
        }
        Op::Bmm(a, b) => {
            let (ta, tb) = (val(*a), val(*b));
            let (bs, m, k, n) = (ta.shape[0], ta.shape[1], ta.shape[2], tb.shape[2]);
            if need(*a) {
                let mut d = vec![0.0; bs * m * k];
                for i in 0..bs {
                    kernels::gemm(
                        m,
                        n,
                        k,
                        1.0,
                        &g.data[i * m * n..],
                        n,
                        1,
                        &tb.data[i * k * n..],
                        1,
                        n,
                        0.0,
                        &mut d[i * m * k..],
                        k,
                        1,
                    );
                }
                accumulate(nodes, grads, *a, Tensor::new(ta.shape(), d)?);
            }
            if need(*b) {
                let mut d = vec![0.0; bs * k * n];
                for i in 0..bs {
                    kernels::gemm(
                        k,
                        m,
                        n,
                        1.0,
                        &ta.data[i * m * k..],
                        1,
                        k,
                        &g.data[i * m * n..],
                        n,
                        1,
                        0.0,
                        &mut d[i * k * n..],
                        n,
                        1,
                    );
                }
                accumulate(nodes, grads, *b, Tensor::new(tb.shape(), d)?);
            }
        }
        Op::Reshape(a) => accumulate(nodes, grads, *a, g.reshape(val(*a).shape())?),
        Op::Permute(a, perm) => accumulate(nodes, grads, *a, kernels::permute(g, &inverse_perm(perm))?),
        Op::Slice { x, axis, start } => {
            let n = val(*x).shape[*axis];
            accumulate(nodes, grads, *x, kernels::pad_axis(g, *axis, *start, n));
        }
        Op::Concat { xs, axis } => {
            let mut start = 0;
            for &x in xs {
                let len = val(x).shape[*axis];
                if need(x) {
                    accumulate(nodes, grads, x, kernels::slice(g, *axis, start, len)?);
                }
                start += len;
            }
        }
        Op::Gather { x, axis, index } => {
            let n = val(*x).shape[*axis];
            accumulate(nodes, grads, *x, kernels::scatter_add(g, *axis, index, n)?);
        }
        Op::ScatterAdd { x, axis, index } => {
            accumulate(nodes, grads, *x, kernels::gather(g, *axis, index)?);
        }
        Op::Sum(a) => {
            let s = g.data[0];
            accumulate(nodes, grads, *a, Tensor::full(val(*a).shape(), s));
        }
        Op::SumAxis(a, axis) => {
            let n = val(*a).shape[*axis];
            accumulate(nodes, grads, *a, kernels::expand_axis(g, *axis, n));
        }
        Op::MaxAxis { x, arg } => {
            let mut d = Tensor::zeros(val(*x).shape());
            for (&p, &gv) in arg.iter().zip(&g.data) {
                d.data[p] += gv;
            }
            accumulate(nodes, grads, *x, d);
        }
        Op::Relu(a) => {
            let t = zip_map(g, val(*a), |gv, x| if x > 0.0 { gv } else { 0.0 });
            accumulate(nodes, grads, *a, t);
        }
        Op::Gelu(a) => accumulate(nodes, grads, *a, zip_map(g, val(*a), |gv, x| gv * gelu_grad(x))),
        Op::Tanh(a) => accumulate(nodes, grads, *a, zip_map(g, &node.value, |gv, y| gv * (1.0 - y * y))),
        Op::Exp(a) => accumulate(nodes, grads, *a, zip_map(g, &node.value, |gv, y| gv * y)),
        Op::Log(a) => accumulate(nodes, grads, *a, zip_map(g, val(*a), |gv, x| gv / x)),
        Op::Sqrt(a) => accumulate(nodes, grads, *a, zip_map(g, &node.value, |gv, y| gv * 0.5 / y)),
        Op::Cmul(a, b) => {
            if need(*a) {
                let t = kernels::cmul(g, val(*b), true)?;
                accumulate(nodes, grads, *a, reduce_to(&t, val(*a).shape()));
            }
            if need(*b) {
                let t = kernels::cmul(g, val(*a), true)?;
                accumulate(nodes, grads, *b, reduce_to(&t, val(*b).shape()));
            }
        }
        Op::Conj(a) => accumulate(nodes, grads, *a, kernels::conj(g)?),
        Op::CmodeMatmul(x, r) => {
            let (gx, gr) = kernels::cmode_matmul_backward(val(*x), val(*r), g);
            accumulate(nodes, grads, *x, gx);
            accumulate(nodes, grads, *r, gr);
        }
        Op::Fft { x, axes, inverse } => {
            let total: usize = axes.iter().map(|&a| val(*x).shape[a]).product();
            let t = if *inverse {
                kernels::fft(g, axes, false)?.scale(1.0 / total as f64)
            } else {
                kernels::fft(g, axes, true)?.scale(total as f64)
            };
            accumulate(nodes, grads, *x, t);
        }
        Op::Dft {
            x,
            axis,
            freqs,
            n,
            inverse,
        } => {
            let t = if *inverse {
                kernels::dft_axis(g, *axis, freqs, *n, false, 1.0 / *n as f64)?
            } else {
                kernels::dft_axis(g, *axis, freqs, *n, true, 1.0)?
            };
            accumulate(nodes, grads, *x, t);
        }
        Op::ToComplex(a) => accumulate(nodes, grads, *a, kernels::complex_part(g, 0)?),
        Op::RealPart(a) => accumulate(nodes, grads, *a, kernels::complex_from_real(g)),
    }
    Ok(())
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires(self.id)
    }

    fn unary(self, out: Tensor, op: Op) -> Var<'t> {
        let rg = self.requires_grad();
        self.tape.push(out, op, rg)
    }

    fn binary(self, other: Var<'t>, out: Tensor, op: Op) -> Var<'t> {
        let rg = self.requires_grad() || other.requires_grad();
        self.tape.push(out, op, rg)
    }

    pub fn add(self, o: Var<'t>) -> Result<Var<'t>> {
        let out = self.value().add(&o.value())?;
        Ok(self.binary(o, out, Op::Add(self.id, o.id)))
    }

    pub fn sub(self, o: Var<'t>) -> Result<Var<'t>> {
        let out = self.value().sub(&o.value())?;
        Ok(self.binary(o, out, Op::Sub(self.id, o.id)))
    }

    pub fn mul(self, o: Var<'t>) -> Result<Var<'t>> {
        let out = self.value().mul(&o.value())?;
        Ok(self.binary(o, out, Op::Mul(self.id, o.id)))
    }

    pub fn div(self, o: Var<'t>) -> Result<Var<'t>> {
        let out = self.value().div(&o.value())?;
        Ok(self.binary(o, out, Op::Div(self.id, o.id)))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let out = self.value().scale(c);
        self.unary(out, Op::Scale(self.id, c))
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        let out = self.value().map(|x| x + c);
        self.unary(out, Op::AddScalar(self.id))
    }

    pub fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn square(self) -> Var<'t> {
        let v = self.value();
        let out = v.map(|x| x * x);
        self.binary(self, out, Op::Mul(self.id, self.id))
    }

    pub fn matmul(self, o: Var<'t>) -> Result<Var<'t>> {
        let out = self.value().matmul(&o.value())?;
        Ok(self.binary(o, out, Op::MatMul(self.id, o.id)))
    }

    pub fn bmm(self, o: Var<'t>) -> Result<Var<'t>> {
        let out = self.value().bmm(&o.value())?;
        Ok(self.binary(o, out, Op::Bmm(self.id, o.id)))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        let out = self.value().reshape(shape)?;
        Ok(self.unary(out, Op::Reshape(self.id)))
    }

    pub fn permute(self, perm: &[usize]) -> Result<Var<'t>> {
        let out = self.value().permute(perm)?;
        Ok(self.unary(out, Op::Permute(self.id, perm.to_vec())))
    }

    /// Swaps the last two axes.
    pub fn transpose(self) -> Result<Var<'t>> {
        let n = self.shape().len();
        if n < 2 {
            return Err(Error::Axis {
                op: "transpose",
                axis: 1,
                rank: n,
            });
        }
        let mut perm: Vec<usize> = (0..n).collect();
        perm.swap(n - 1, n - 2);
        self.permute(&perm)
    }

    pub fn slice(self, axis: usize, start: usize, len: usize) -> Result<Var<'t>> {
        let out = self.value().slice(axis, start, len)?;
        Ok(self.unary(out, Op::Slice { x: self.id, axis, start }))
    }

    pub fn gather(self, axis: usize, index: Rc<[usize]>) -> Result<Var<'t>> {
        let out = self.value().gather(axis, &index)?;
        Ok(self.unary(out, Op::Gather { x: self.id, axis, index }))
    }

    pub fn scatter_add(self, axis: usize, index: Rc<[usize]>, size: usize) -> Result<Var<'t>> {
        let out = self.value().scatter_add(axis, &index, size)?;
        Ok(self.unary(out, Op::ScatterAdd { x: self.id, axis, index }))
    }

    pub fn sum(self) -> Var<'t> {
        let out = Tensor::scalar(self.value().sum());
        self.unary(out, Op::Sum(self.id))
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.value().len() as f64;
        self.sum().scale(1.0 / n)
    }

    pub fn sum_axis(self, axis: usize) -> Result<Var<'t>> {
        let out = self.value().sum_axis(axis)?;
        Ok(self.unary(out, Op::SumAxis(self.id, axis)))
    }

    pub fn mean_axis(self, axis: usize) -> Result<Var<'t>> {
        let n = *self
            .shape()
            .get(axis)
            .ok_or(Error::Axis {
                op: "mean_axis",
                axis,
                rank: self.shape().len(),
            })?;
        Ok(self.sum_axis(axis)?.scale(1.0 / n as f64))
    }

    pub fn max_axis(self, axis: usize) -> Result<Var<'t>> {
        let (out, arg) = kernels::max_axis(&self.value(), axis)?;
        Ok(self.unary(out, Op::MaxAxis { x: self.id, arg }))
    }

    /// Softmax along `axis`, shifted by the axis max for stability.
    pub fn softmax(self, axis: usize) -> Result<Var<'t>> {
        let shift = self.tape.constant(kernels::max_axis(&self.value(), axis)?.0);
        let e = self.sub(shift)?.exp();
        let z = e.sum_axis(axis)?;
        e.div(z)
    }

    pub fn relu(self) -> Var<'t> {
        let out = self.value().map(|x| x.max(0.0));
        self.unary(out, Op::Relu(self.id))
    }

    pub fn gelu(self) -> Var<'t> {
        let out = self
            .value()
            .map(|x| 0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2)));
        self.unary(out, Op::Gelu(self.id))
    }

    pub fn tanh(self) -> Var<'t> {
        let out = self.value().map(f64::tanh);
        self.unary(out, Op::Tanh(self.id))
    }

    pub fn exp(self) -> Var<'t> {
        let out = self.value().map(f64::exp);
        self.unary(out, Op::Exp(self.id))
    }

    pub fn log(self) -> Var<'t> {
        let out = self.value().map(f64::ln);
        self.unary(out, Op::Log(self.id))
    }

    pub fn sqrt(self) -> Var<'t> {
        let out = self.value().map(f64::sqrt);
        self.unary(out, Op::Sqrt(self.id))
    }

    pub fn cmul(self, o: Var<'t>) -> Result<Var<'t>> {
        let out = self.value().cmul(&o.value())?;
        Ok(self.binary(o, out, Op::Cmul(self.id, o.id)))
    }

    pub fn conj(self) -> Result<Var<'t>> {
        let out = self.value().conj()?;
        Ok(self.unary(out, Op::Conj(self.id)))
    }

    /// Per-mode complex channel mixing `(B, M, I, 2) x (M, I, O, 2) -> (B, M, O, 2)`.
    pub fn cmode_matmul(self, r: Var<'t>) -> Result<Var<'t>> {
        let out = kernels::cmode_matmul(&self.value(), &r.value())?;
        Ok(self.binary(r, out, Op::CmodeMatmul(self.id, r.id)))
    }

    pub fn fft(self, axes: &[usize]) -> Result<Var<'t>> {
        let out = self.value().fft(axes)?;
        Ok(self.unary(
            out,
            Op::Fft {
                x: self.id,
                axes: axes.to_vec(),
                inverse: false,
            },
        ))
    }

    pub fn ifft(self, axes: &[usize]) -> Result<Var<'t>> {
        let out = self.value().ifft(axes)?;
        Ok(self.unary(
            out,
            Op::Fft {
                x: self.id,
                axes: axes.to_vec(),
                inverse: true,
            },
        ))
    }

    /// Forward DFT along `axis` (length `n`) evaluated only at the signed frequencies `freqs`.
    pub fn dft_modes(self, axis: usize, freqs: Rc<[i64]>) -> Result<Var<'t>> {
        let n = *self.shape().get(axis).ok_or(Error::Axis {
            op: "dft_modes",
            axis,
            rank: self.shape().len(),
        })?;
        let out = kernels::dft_axis(&self.value(), axis, &freqs, n, false, 1.0)?;
        Ok(self.unary(
            out,
            Op::Dft {
                x: self.id,
                axis,
                freqs,
                n,
                inverse: false,
            },
        ))
    }

    /// Normalized inverse DFT along `axis` from coefficients at `freqs` to `n` samples.
    pub fn idft_modes(self, axis: usize, freqs: Rc<[i64]>, n: usize) -> Result<Var<'t>> {
        let out = kernels::dft_axis(&self.value(), axis, &freqs, n, true, 1.0 / n as f64)?;
        Ok(self.unary(
            out,
            Op::Dft {
                x: self.id,
                axis,
                freqs,
                n,
                inverse: true,
            },
        ))
    }

    pub fn to_complex(self) -> Var<'t> {
        let out = self.value().to_complex();
        self.unary(out, Op::ToComplex(self.id))
    }

    pub fn real_part(self) -> Result<Var<'t>> {
        let out = self.value().real_part()?;
        Ok(self.unary(out, Op::RealPart(self.id)))
    }
}
