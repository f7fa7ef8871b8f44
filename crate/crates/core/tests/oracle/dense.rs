//! Dense reference computations for the operator layers.

use nop_core::nop::attention::attention_layer;
use nop_core::nop::deeponet::deeponet_forward;
use nop_core::nop::gno::{gno_layer, init_kernel_net};
use nop_core::nop::graph::{graph_on_nodes, multilevel_graph};
use nop_core::nop::layers::{init_dense, init_mlp};
use nop_core::nop::lno::lno_layer;
use nop_core::nop::mgno::{mgno_vcycle, vcycle_kernels};
use nop_core::nop::{Activation, ModelConfig, OperatorModel, ParamStore};
use nop_core::{Grid, Rng, Tape, Tensor};

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub fn act_fn(a: Activation) -> fn(f64) -> f64 {
    match a {
        Activation::Relu => |x: f64| x.max(0.0),
        Activation::Gelu => gelu,
        Activation::Identity => |x| x,
    }
}

/// `x w + b` for `w (in, out)`.
pub fn affine(store: &ParamStore, prefix: &str, x: &[f64]) -> Vec<f64> {
    let w = store.get(&format!("{prefix}.w")).unwrap();
    let b = store.get(&format!("{prefix}.b")).unwrap();
    let out = w.shape()[1];
    (0..out)
        .map(|o| b.data()[o] + x.iter().enumerate().map(|(i, xi)| xi * w.data()[i * out + o]).sum::<f64>())
        .collect()
}

pub fn net(store: &ParamStore, prefix: &str, layers: usize, act: Activation, x: &[f64]) -> Vec<f64> {
    let f = act_fn(act);
    let mut h = x.to_vec();
    for i in 0..layers {
        h = affine(store, &format!("{prefix}.l{i}"), &h);
        if i + 1 < layers {
            h.iter_mut().for_each(|v| *v = f(*v));
        }
    }
    h
}

pub fn row(t: &Tensor, i: usize) -> Vec<f64> {
    let c = *t.shape().last().unwrap();
    t.data()[i * c..(i + 1) * c].to_vec()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Neighbors of `x` among `ys` within `r`, else the nearest one.
pub fn ball(x: &[f64], ys: &[Vec<f64>], r: f64) -> Vec<usize> {
    let n: Vec<usize> = (0..ys.len()).filter(|&j| dist(x, &ys[j]) < r).collect();
    if !n.is_empty() {
        return n;
    }
    let best = (0..ys.len())
        .min_by(|&a, &b| dist(x, &ys[a]).partial_cmp(&dist(x, &ys[b])).unwrap())
        .unwrap();
    vec![best]
}

/// Dense block matrix `(n_dst C, n_src C)` of the averaged kernel integral.
#[allow(clippy::too_many_arguments)]
pub fn dense_kernel(
    store: &ParamStore,
    prefix: &str,
    hidden: usize,
    act: Activation,
    c: usize,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    ax: &[Vec<f64>],
    ay: &[Vec<f64>],
    r: f64,
) -> Vec<Vec<f64>> {
    let mut k = vec![vec![0.0; ys.len() * c]; xs.len() * c];
    for i in 0..xs.len() {
        let nb = ball(&xs[i], ys, r);
        let w = 1.0 / nb.len() as f64;
        for &j in &nb {
            let mut e = xs[i].clone();
            e.extend(&ys[j]);
            e.extend(&ax[i]);
            e.extend(&ay[j]);
            let kv = net(store, prefix, hidden + 1, act, &e);
            for o in 0..c {
                for q in 0..c {
                    k[i * c + o][j * c + q] += w * kv[o * c + q];
                }
            }
        }
    }
    k
}

pub fn matvec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

pub fn rand_tensor(shape: &[usize], rng: &mut Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.normal())
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn rows_of(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.shape()[0]).map(|i| row(t, i)).collect()
}

/// GNO layer on a 16-point grid against the dense averaged-kernel quadrature, worst over three radii.
pub fn gno_vs_dense() -> f64 {
    let grid = Grid::unit_square(4).unwrap();
    let coords = grid.coords();
    let (c, hidden) = (3, 2);
    let act = Activation::Gelu;
    let mut rng = Rng::new(21);
    let mut store = ParamStore::new();
    init_kernel_net(&mut store, "g.kernel", 6, 5, hidden, c * c, &mut rng).unwrap();
    init_dense(&mut store, "g.lin", c, c, &mut rng).unwrap();
    let a = rand_tensor(&[1, 16, 1], &mut rng);
    let v = rand_tensor(&[1, 16, c], &mut rng);
    let xs = rows_of(&coords);
    let av: Vec<Vec<f64>> = (0..16).map(|i| vec![a.data()[i]]).collect();
    let vflat = v.data().to_vec();
    let mut worst: f64 = 0.0;
    for r in [2.0, 0.5, 0.3] {
        let g = graph_on_nodes(&coords, (0..16).collect(), r).unwrap();
        let tape = Tape::new();
        let p = store.bind(&tape, false);
        let got = gno_layer(&p, "g", hidden, act, &g, tape.constant(a.clone()), tape.constant(v.clone())).unwrap().value();
        let k = dense_kernel(&store, "g.kernel", hidden, act, c, &xs, &xs, &av, &av, r);
        let kv = matvec(&k, &vflat);
        let mut want = Vec::new();
        for i in 0..16 {
            let lin = affine(&store, "g.lin", &vflat[i * c..(i + 1) * c]);
            want.extend((0..c).map(|o| gelu(lin[o] + kv[i * c + o])));
        }
        worst = worst.max(max_diff(got.data(), &want));
    }
    worst
}

/// LNO layer against the dense separable kernel `sum_r phi_r(x) psi_r(y)` on 32 points.
pub fn lno_vs_dense() -> f64 {
    let j = 32;
    let (c, rank, hidden) = (2, 3, 1);
    let act = Activation::Gelu;
    let mut rng = Rng::new(22);
    let mut store = ParamStore::new();
    for f in ["phi", "psi"] {
        init_kernel_net(&mut store, &format!("l.{f}"), 2, 4, hidden, rank * c * c, &mut rng).unwrap();
    }
    init_dense(&mut store, "l.lin", c, c, &mut rng).unwrap();
    let xs: Vec<f64> = (0..j).map(|i| i as f64 / j as f64).collect();
    let a: Vec<f64> = (0..j).map(|_| rng.normal()).collect();
    let feats = Tensor::new(&[1, j, 2], xs.iter().zip(&a).flat_map(|(x, y)| [*x, *y]).collect()).unwrap();
    let v = rand_tensor(&[1, j, c], &mut rng);
    let tape = Tape::new();
    let p = store.bind(&tape, false);
    let got = lno_layer(&p, "l", rank, hidden, act, tape.constant(feats), tape.constant(v.clone())).unwrap().value();

    let phi: Vec<Vec<f64>> = (0..j).map(|i| net(&store, "l.phi", hidden + 1, act, &[xs[i], a[i]])).collect();
    let psi: Vec<Vec<f64>> = (0..j).map(|i| net(&store, "l.psi", hidden + 1, act, &[xs[i], a[i]])).collect();
    let mut want = vec![0.0; j * c];
    for x in 0..j {
        let lin = affine(&store, "l.lin", &v.data()[x * c..(x + 1) * c]);
        for o in 0..c {
            let mut integral = 0.0;
            for y in 0..j {
                for q in 0..c {
                    let mut kappa = 0.0;
                    for r in 0..rank {
                        for m in 0..c {
                            kappa += phi[x][(r * c + o) * c + m] * psi[y][(r * c + m) * c + q];
                        }
                    }
                    integral += kappa * v.data()[y * c + q];
                }
            }
            want[x * c + o] = gelu(lin[o] + integral / j as f64);
        }
    }
    max_diff(got.data(), &want)
}

pub fn mgno_store(levels: usize, c: usize, hidden: usize, e: usize, rng: &mut Rng) -> ParamStore {
    let mut s = ParamStore::new();
    for l in 0..levels {
        init_kernel_net(&mut s, &format!("m.k{l}{l}"), e, 4, hidden, c * c, rng).unwrap();
        init_dense(&mut s, &format!("m.lin{l}"), c, c, rng).unwrap();
        if l + 1 < levels {
            init_kernel_net(&mut s, &format!("m.k{}{l}", l + 1), e, 4, hidden, c * c, rng).unwrap();
            init_kernel_net(&mut s, &format!("m.k{l}{}", l + 1), e, 4, hidden, c * c, rng).unwrap();
        }
    }
    s
}

/// One-level V-cycle against a GNO layer holding the same parameters.
pub fn mgno_one_level_vs_gno() -> f64 {
    let grid = Grid::unit_square(5).unwrap();
    let coords = grid.coords();
    let (c, hidden, r) = (2, 1, 0.4);
    let act = Activation::Gelu;
    let mut rng = Rng::new(23);
    let ms = mgno_store(1, c, hidden, 6, &mut rng);
    let mut gs = ParamStore::new();
    for (name, t) in ms.iter() {
        gs.insert(name.replace("m.k00", "g.kernel").replace("m.lin0", "g.lin"), t.clone()).unwrap();
    }
    let nodes: Vec<usize> = rng.permutation(25);
    let mg = multilevel_graph(&coords, nodes.clone(), &[25], &[r]).unwrap();
    let g = graph_on_nodes(&coords, nodes, r).unwrap();
    let a = rand_tensor(&[2, 25, 1], &mut rng);
    let v = rand_tensor(&[2, 25, c], &mut rng);
    let tape = Tape::new();
    let (pm, pg) = (ms.bind(&tape, false), gs.bind(&tape, false));
    let (av, vv) = (tape.constant(a), tape.constant(v));
    let k = vcycle_kernels(&pm, "m", hidden, act, c, &mg, av).unwrap();
    let mut hat = vec![None];
    let got = mgno_vcycle(&pm, "m", act, &mg, &k, &mut hat, vv).unwrap().value();
    let want = gno_layer(&pg, "g", hidden, act, &g, av, vv).unwrap().value();
    got.max_abs_diff(&want)
}

/// Two-level linear V-cycle against `K00 v + K01 K11 K10 v` assembled densely.
pub fn mgno_two_level_vs_hierarchical() -> f64 {
    let grid = Grid::unit_square(5).unwrap();
    let coords = grid.coords();
    let (c, hidden) = (2, 1);
    let sizes = [25, 8];
    let radii = [0.3, 0.45];
    let id = Activation::Identity;
    let mut rng = Rng::new(24);
    let mut store = mgno_store(2, c, hidden, 6, &mut rng);
    for l in 0..2 {
        for s in ["w", "b"] {
            let t = store.get_mut(&format!("m.lin{l}.{s}")).unwrap();
            *t = Tensor::zeros(t.shape());
        }
    }
    let nodes = rng.permutation(25);
    let mg = multilevel_graph(&coords, nodes.clone(), &sizes, &radii).unwrap();
    let a = rand_tensor(&[1, 25, 1], &mut rng);
    let v = rand_tensor(&[1, 25, c], &mut rng);
    let tape = Tape::new();
    let p = store.bind(&tape, false);
    let av = tape.constant(a.clone());
    let k = vcycle_kernels(&p, "m", hidden, id, c, &mg, av).unwrap();
    let mut hat = vec![None, None];
    let got = mgno_vcycle(&p, "m", id, &mg, &k, &mut hat, tape.constant(v.clone())).unwrap().value();

    let pts: Vec<Vec<f64>> = nodes.iter().map(|&n| row(&coords, n)).collect();
    let avals: Vec<Vec<f64>> = (0..25).map(|i| vec![a.data()[i]]).collect();
    let lv = |l: usize| (&pts[..sizes[l]], &avals[..sizes[l]]);
    let kk = |name: &str, dst: usize, src: usize, r: f64| {
        let (xs, ax) = lv(dst);
        let (ys, ay) = lv(src);
        dense_kernel(&store, name, hidden, id, c, xs, ys, ax, ay, r)
    };
    let k00 = kk("m.k00", 0, 0, radii[0]);
    let k11 = kk("m.k11", 1, 1, radii[1]);
    let k10 = kk("m.k10", 1, 0, radii[1]);
    let k01 = kk("m.k01", 0, 1, radii[1]);
    let vv = v.data().to_vec();
    let coarse = matvec(&k01, &matvec(&k11, &matvec(&k10, &vv)));
    let want: Vec<f64> = matvec(&k00, &vv).iter().zip(&coarse).map(|(x, y)| x + y).collect();
    max_diff(got.data(), &want)
}

/// Attention layer against the softmax formula evaluated point by point.
pub fn attention_vs_direct() -> f64 {
    let (k, n, m) = (4, 3, 2);
    let act = Activation::Gelu;
    let mut rng = Rng::new(25);
    let mut store = ParamStore::new();
    for name in ["a", "b", "val"] {
        store.insert(format!("t.{name}"), rand_tensor(&[n, m], &mut rng)).unwrap();
    }
    store.insert("t.out", rand_tensor(&[m, n], &mut rng)).unwrap();
    let v = rand_tensor(&[1, k, n], &mut rng);
    let tape = Tape::new();
    let p = store.bind(&tape, false);
    let got = attention_layer(&p, "t", act, tape.constant(v.clone())).unwrap().value();

    let mat = |name: &str, x: &[f64]| -> Vec<f64> {
        let w = store.get(name).unwrap();
        let out = w.shape()[1];
        (0..out).map(|o| x.iter().enumerate().map(|(i, xi)| xi * w.data()[i * out + o]).sum()).collect()
    };
    let vs: Vec<Vec<f64>> = (0..k).map(|j| v.data()[j * n..(j + 1) * n].to_vec()).collect();
    let av: Vec<Vec<f64>> = vs.iter().map(|x| mat("t.a", x)).collect();
    let bv: Vec<Vec<f64>> = vs.iter().map(|x| mat("t.b", x)).collect();
    let mut want = Vec::new();
    for j in 0..k {
        let mut acc = vec![0.0; m];
        for q in 0..k {
            let z: Vec<f64> = (0..k).map(|i| av[i].iter().zip(&bv[q]).map(|(x, y)| x * y).sum::<f64>() / (m as f64).sqrt()).collect();
            let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s = (z[j] - zmax).exp() / z.iter().map(|t| (t - zmax).exp()).sum::<f64>();
            let val = mat("t.val", &vs[q]);
            acc.iter_mut().zip(&val).for_each(|(a, b)| *a += s * b);
        }
        let mixed = mat("t.out", &acc);
        want.extend((0..n).map(|o| gelu(vs[j][o] + mixed[o])));
    }
    max_diff(got.data(), &want)
}

/// DeepONet forward against `sum_k branch_k(a) trunk_k(x)` per output channel.
pub fn deeponet_vs_direct() -> f64 {
    let (q, basis, depth, j, ch) = (6, 4, 3, 5, 2);
    let act = Activation::Gelu;
    let mut rng = Rng::new(27);
    let mut store = ParamStore::new();
    init_mlp(&mut store, "o.branch", &[q, 7, 7, basis * ch], &mut rng).unwrap();
    init_mlp(&mut store, "o.trunk", &[1, 7, 7, basis * ch], &mut rng).unwrap();
    let sensors = rand_tensor(&[2, q], &mut rng);
    let query = Tensor::from_fn(&[j, 1], |i| i as f64 / j as f64);
    let tape = Tape::new();
    let p = store.bind(&tape, false);
    let got = deeponet_forward(&p, "o", depth, act, tape.constant(sensors.clone()), tape.constant(query.clone()), ch).unwrap().value();
    let mut want = Vec::new();
    for b in 0..2 {
        let g = net(&store, "o.branch", depth, act, &sensors.data()[b * q..(b + 1) * q]);
        for x in 0..j {
            let phi = net(&store, "o.trunk", depth, act, &[query.data()[x]]);
            want.extend((0..ch).map(|c| (0..basis).map(|k| g[c * basis + k] * phi[c * basis + k]).sum::<f64>()));
        }
    }
    max_diff(got.data(), &want)
}

/// Default 1-D FNO in its linear band-limited regime: identity activation, coordinate rows of the lift zeroed.
pub fn linear_fno() -> OperatorModel {
    let mut c = ModelConfig::fno_1d();
    c.activation = Activation::Identity;
    let mut m = OperatorModel::new(c, 5).unwrap();
    // Coordinates are a sawtooth on the torus; drop them so every layer sees a band-limited input.
    let w = m.params.get_mut("lift.w").unwrap();
    let width = w.shape()[1];
    w.data_mut()[..width].fill(0.0);
    m
}

pub fn band_limited(s: usize) -> Tensor {
    Tensor::from_fn(&[1, s, 1], |i| {
        let x = i as f64 / s as f64;
        let tau = std::f64::consts::TAU;
        (tau * x).sin() + 0.5 * (3.0 * tau * x).cos() - 0.25 * (7.0 * tau * x).sin() + 0.1
    })
}

/// Outputs of `m` on samplings of [`band_limited`] at each resolution (multiples of the first).
pub fn band_limited_outputs(m: &OperatorModel, sizes: &[usize]) -> Vec<Tensor> {
    sizes
        .iter()
        .map(|&s| m.predict(&Grid::periodic_1d(s, 1.0).unwrap(), &band_limited(s), &mut Rng::new(0)).unwrap())
        .collect()
}

/// Largest disagreement at points shared with the coarsest sampling.
pub fn shared_point_gap(outs: &[Tensor]) -> f64 {
    let s0 = outs[0].len();
    let mut worst: f64 = 0.0;
    for o in &outs[1..] {
        let r = o.len() / s0;
        for i in 0..s0 {
            worst = worst.max((o.data()[r * i] - outs[0].data()[i]).abs());
        }
    }
    worst
}
