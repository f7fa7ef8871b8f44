//! Central-difference gradient checks for tape primitives.

use std::rc::Rc;

use nop_core::tensor::{Tape, Tensor, Var};
use nop_core::Rng;

pub const STEP: f64 = 1e-6;
pub const REL_TOL: f64 = 1e-5;
pub const ABS_FLOOR: f64 = 1e-8;

pub type Op = Box<dyn for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>>;

pub struct Case {
    pub name: &'static str,
    pub inputs: Vec<Tensor>,
    pub op: Op,
}

fn case(name: &'static str, inputs: Vec<Tensor>, op: impl for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t> + 'static) -> Case {
    Case {
        name,
        inputs,
        op: Box::new(op),
    }
}

fn random(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.uniform_range(lo, hi))
}

pub const GROUPS: [&str; 9] = ["binary", "scale", "matmul", "shape", "index", "reduce", "pointwise", "complex", "fourier"];

/// Every primitive of one group, on small random inputs.
pub fn cases(group: &str) -> Vec<Case> {
    let mut r = Rng::new(7);
    match group {
        "binary" => {
            let a = random(&mut r, &[3, 4], -1.0, 1.0);
            let b = random(&mut r, &[4], -1.0, 1.0);
            let c = random(&mut r, &[3, 1], 0.5, 2.0);
            vec![
                case("add", vec![a.clone(), b.clone()], |_, v| v[0].add(v[1]).unwrap()),
                case("sub", vec![b, a.clone()], |_, v| v[0].sub(v[1]).unwrap()),
                case("mul", vec![a.clone(), c.clone()], |_, v| v[0].mul(v[1]).unwrap()),
                case("div", vec![a.clone(), c.clone()], |_, v| v[0].div(v[1]).unwrap()),
                case("div_b", vec![c, a.map(|x| x + 3.0)], |_, v| v[0].div(v[1]).unwrap()),
            ]
        }
        "scale" => {
            let a = random(&mut r, &[5], -1.0, 1.0);
            vec![
                case("scale", vec![a.clone()], |_, v| v[0].scale(-2.5)),
                case("add_scalar", vec![a.clone()], |_, v| v[0].add_scalar(0.7)),
                case("square", vec![a], |_, v| v[0].square()),
            ]
        }
        "matmul" => {
            let x = random(&mut r, &[4, 4], -1.0, 1.0);
            let y = random(&mut r, &[4, 4], -1.0, 1.0);
            let z = random(&mut r, &[4, 3], -1.0, 1.0);
            let batched = random(&mut r, &[2, 3, 4], -1.0, 1.0);
            let w = random(&mut r, &[4, 2], -1.0, 1.0);
            let rhs = random(&mut r, &[2, 4, 5], -1.0, 1.0);
            vec![
                case("matmul_chain", vec![x, y, z], |_, v| v[0].matmul(v[1]).unwrap().matmul(v[2]).unwrap()),
                case("matmul_batched_lhs", vec![batched.clone(), w], |_, v| v[0].matmul(v[1]).unwrap()),
                case("bmm", vec![batched, rhs], |_, v| v[0].bmm(v[1]).unwrap()),
            ]
        }
        "shape" => {
            let a = random(&mut r, &[2, 3, 4], -1.0, 1.0);
            let b = random(&mut r, &[2, 2, 4], -1.0, 1.0);
            vec![
                case("reshape", vec![a.clone()], |_, v| v[0].reshape(&[6, 4]).unwrap().exp()),
                case("permute", vec![a.clone()], |_, v| v[0].permute(&[2, 0, 1]).unwrap().exp()),
                case("transpose", vec![a.clone()], |_, v| v[0].transpose().unwrap().exp()),
                case("slice", vec![a.clone()], |_, v| v[0].slice(1, 1, 2).unwrap().exp()),
                case("concat", vec![a, b], |t, v| t.concat(&[v[0], v[1]], 1).unwrap().exp()),
            ]
        }
        "index" => {
            let a = random(&mut r, &[3, 5, 2], -1.0, 1.0);
            let b = random(&mut r, &[3, 4, 2], -1.0, 1.0);
            let idx: Rc<[usize]> = Rc::from(vec![4, 0, 4, 2]);
            let i2 = idx.clone();
            vec![
                case("gather", vec![a], move |_, v| v[0].gather(1, i2.clone()).unwrap().exp()),
                case("scatter_add", vec![b], move |_, v| v[0].scatter_add(1, idx.clone(), 6).unwrap().exp()),
            ]
        }
        "reduce" => {
            let a = random(&mut r, &[3, 4], -1.0, 1.0);
            vec![
                case("sum", vec![a.clone()], |_, v| v[0].exp().sum()),
                case("mean", vec![a.clone()], |_, v| v[0].exp().mean()),
                case("sum_axis", vec![a.clone()], |_, v| v[0].sum_axis(0).unwrap().exp()),
                case("mean_axis", vec![a.clone()], |_, v| v[0].mean_axis(1).unwrap().exp()),
                case("max_axis", vec![a.clone()], |_, v| v[0].max_axis(1).unwrap().exp()),
                case("softmax", vec![a], |_, v| v[0].softmax(1).unwrap()),
            ]
        }
        "pointwise" => {
            let a = random(&mut r, &[12], -2.0, 2.0);
            let pos = random(&mut r, &[12], 0.5, 3.0);
            vec![
                case("relu", vec![a.clone()], |_, v| v[0].relu()),
                case("gelu", vec![a.clone()], |_, v| v[0].gelu()),
                case("tanh", vec![a.clone()], |_, v| v[0].tanh()),
                case("exp", vec![a], |_, v| v[0].exp()),
                case("log", vec![pos.clone()], |_, v| v[0].log()),
                case("sqrt", vec![pos], |_, v| v[0].sqrt()),
            ]
        }
        "complex" => {
            let a = random(&mut r, &[3, 4, 2], -1.0, 1.0);
            let b = random(&mut r, &[4, 2], -1.0, 1.0);
            let re = random(&mut r, &[3, 4], -1.0, 1.0);
            let x = random(&mut r, &[2, 3, 4, 2], -1.0, 1.0);
            let w = random(&mut r, &[3, 4, 5, 2], -1.0, 1.0);
            vec![
                case("cmul", vec![a.clone(), b], |_, v| v[0].cmul(v[1]).unwrap()),
                case("conj", vec![a.clone()], |_, v| v[0].conj().unwrap().exp()),
                case("real_part", vec![a], |_, v| v[0].real_part().unwrap().exp()),
                case("to_complex", vec![re], |_, v| v[0].to_complex().exp()),
                case("cmode_matmul", vec![x, w], |_, v| v[0].cmode_matmul(v[1]).unwrap()),
            ]
        }
        "fourier" => {
            let a = random(&mut r, &[2, 6, 5, 2], -1.0, 1.0);
            let c = random(&mut r, &[2, 4, 3, 2], -1.0, 1.0);
            let freqs: Rc<[i64]> = Rc::from(vec![0, 1, -1, 2]);
            let f2 = freqs.clone();
            vec![
                case("fft", vec![a.clone()], |_, v| v[0].fft(&[1, 2]).unwrap()),
                case("ifft", vec![a.clone()], |_, v| v[0].ifft(&[1]).unwrap()),
                case("dft_modes", vec![a], move |_, v| v[0].dft_modes(1, f2.clone()).unwrap()),
                case("idft_modes", vec![c], move |_, v| v[0].idft_modes(1, freqs.clone(), 7).unwrap()),
            ]
        }
        other => panic!("unknown primitive group {other}"),
    }
}

/// Worst mismatch between the tape gradient and a central difference, as a multiple of the
/// tolerance (relative `REL_TOL`, absolute `ABS_FLOOR` for tiny entries); below 1 passes.
///
/// The loss is `sum(w * op(inputs))` with fixed random weights `w`.
pub fn worst_ratio(c: &Case) -> f64 {
    let f = &c.op;
    let weights = {
        let tape = Tape::new();
        let vars: Vec<Var> = c.inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&tape, &vars).value();
        random(&mut Rng::new(99), out.shape(), 0.5, 1.5)
    };
    let eval = |ins: &[Tensor]| -> f64 {
        let tape = Tape::new();
        let vars: Vec<Var> = ins.iter().map(|t| tape.constant(t.clone())).collect();
        f(&tape, &vars).value().mul(&weights).unwrap().sum()
    };
    let tape = Tape::new();
    let vars: Vec<Var> = c.inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&tape, &vars).mul(tape.constant(weights.clone())).unwrap().sum();
    let grads = tape.backward(loss).unwrap();
    let mut worst: f64 = 0.0;
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads.wrt(*v);
        if analytic.shape() != c.inputs[k].shape() {
            return f64::INFINITY;
        }
        for i in 0..c.inputs[k].len() {
            let mut plus = c.inputs.clone();
            plus[k].data_mut()[i] += STEP;
            let mut minus = c.inputs.clone();
            minus[k].data_mut()[i] -= STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * STEP);
            let a = analytic.data()[i];
            let scale = a.abs().max(numeric.abs());
            let ratio = if scale < ABS_FLOOR {
                (a - numeric).abs() / ABS_FLOOR
            } else {
                (a - numeric).abs() / scale / REL_TOL
            };
            if ratio.is_nan() {
                return f64::INFINITY;
            }
            worst = worst.max(ratio);
        }
    }
    worst
}
