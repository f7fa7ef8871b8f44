//! Mini-batch training of operator models under the relative L2 loss.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nop::{OperatorModel, ParamStore, Prepared};
use crate::pde::{Dataset, FieldSample};
use crate::random::Rng;
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    RelativeL2,
    Mse,
}

fn d_epochs() -> usize {
    500
}
fn d_lr() -> f64 {
    1e-3
}
fn d_halve() -> usize {
    100
}
fn d_batch() -> usize {
    20
}
fn d_one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_lr")]
    pub initial_lr: f64,
    #[serde(default = "d_halve")]
    pub halve_every: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub loss: Loss,
    /// L2 penalty added to every gradient.
    #[serde(default)]
    pub weight_decay: f64,
    /// Stop after this many epochs without a test-error improvement; 0 disables.
    #[serde(default)]
    pub patience: usize,
    /// Test error is computed every this many epochs (and at the last one).
    #[serde(default = "d_one")]
    pub eval_every: usize,
    /// Intermediate checkpoints every this many epochs; 0 keeps only the final one.
    #[serde(default)]
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: d_epochs(),
            initial_lr: d_lr(),
            halve_every: d_halve(),
            batch_size: d_batch(),
            seed: 0,
            loss: Loss::RelativeL2,
            weight_decay: 0.0,
            patience: 0,
            eval_every: 1,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0) || self.halve_every == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::Config(format!(
                "train needs positive initial_lr, halve_every, batch_size and eval_every, got {}, {}, {}, {}",
                self.initial_lr, self.halve_every, self.batch_size, self.eval_every
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("weight_decay must be nonnegative, got {}", self.weight_decay)));
        }
        Ok(())
    }

    /// `initial_lr` halved `floor(epoch / halve_every)` times.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        // Successive halvings, not one power: the two round differently among subnormals.
        let mut lr = self.initial_lr;
        for _ in 0..epoch / self.halve_every {
            if lr == 0.0 {
                break;
            }
            lr *= 0.5;
        }
        lr
    }
}

fn norm_of(d: &[f64]) -> f64 {
    d.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `||pred - truth|| / ||truth||` over all grid values.
pub fn relative_l2(pred: &FieldSample, truth: &FieldSample) -> Result<f64> {
    if pred.grid != truth.grid || pred.values.shape() != truth.values.shape() {
        return Err(Error::shape("relative_l2", pred.values.shape(), truth.values.shape()));
    }
    relative_l2_values(pred.data(), truth.data())
}

pub fn relative_l2_values(pred: &[f64], truth: &[f64]) -> Result<f64> {
    let den = norm_of(truth);
    if den == 0.0 {
        return Err(Error::Domain("relative error against an identically zero field".into()));
    }
    let num: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>().sqrt();
    Ok(num / den)
}

/// Per-sample relative errors of stacked fields `(B, ..)`.
pub fn relative_l2_batch(pred: &Tensor, truth: &Tensor) -> Result<Vec<f64>> {
    if pred.shape() != truth.shape() {
        return Err(Error::shape("relative_l2_batch", pred.shape(), truth.shape()));
    }
    let b = pred.shape()[0];
    let n = if b == 0 { 0 } else { pred.len() / b };
    (0..b)
        .map(|i| relative_l2_values(&pred.data()[i * n..(i + 1) * n], &truth.data()[i * n..(i + 1) * n]))
        .collect()
}

/// Differentiable batch loss for `pred (B, ..)` against constant `truth`.
pub fn loss_var<'t>(loss: Loss, pred: Var<'t>, truth: &Tensor) -> Result<Var<'t>> {
    let shape = pred.shape();
    if shape != truth.shape() {
        return Err(Error::shape("loss", &shape, truth.shape()));
    }
    let b = shape[0];
    let n = truth.len() / b.max(1);
    let tape = pred.tape();
    let diff = pred.sub(tape.constant(truth.clone()))?;
    match loss {
        Loss::Mse => Ok(diff.square().mean()),
        Loss::RelativeL2 => {
            let mut inv = Vec::with_capacity(b);
            for i in 0..b {
                let d = norm_of(&truth.data()[i * n..(i + 1) * n]);
                if d == 0.0 {
                    return Err(Error::Domain(format!("relative loss against an identically zero target (batch row {i})")));
                }
                inv.push(1.0 / d);
            }
            let num = diff.reshape(&[b, n])?.square().sum_axis(1)?.sqrt();
            Ok(num.mul(tape.constant(Tensor::new(&[b, 1], inv)?))?.mean())
        }
    }
}

/// First and second moments per parameter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
    pub step: u64,
}

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// One bias-corrected Adam update; parameters without a gradient see a zero gradient.
pub fn adam_step(params: &mut ParamStore, grads: &BTreeMap<String, Tensor>, state: &mut AdamState, lr: f64, weight_decay: f64) -> Result<()> {
    for (name, g) in grads {
        let p = params.get(name)?;
        if g.shape() != p.shape() {
            return Err(Error::shape("adam_step", g.shape(), p.shape()));
        }
        if !g.all_finite() {
            return Err(Error::Numeric(format!("non-finite gradient for parameter '{name}'")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for (name, p) in params.iter_mut() {
        let m = state.m.entry(name.to_string()).or_insert_with(|| Tensor::zeros(p.shape()));
        let v = state.v.entry(name.to_string()).or_insert_with(|| Tensor::zeros(p.shape()));
        let g = grads.get(name);
        let pd = p.data_mut();
        for i in 0..pd.len() {
            let gi = g.map_or(0.0, |g| g.data()[i]) + weight_decay * pd[i];
            let mi = BETA1 * m.data()[i] + (1.0 - BETA1) * gi;
            let vi = BETA2 * v.data()[i] + (1.0 - BETA2) * gi * gi;
            m.data_mut()[i] = mi;
            v.data_mut()[i] = vi;
            pd[i] -= lr * (mi / c1) / ((vi / c2).sqrt() + EPS);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean relative error of the training predictions seen during the epoch.
    pub train_err: f64,
    pub test_err: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,lr,train_err,test_err\n");
        for r in &self.records {
            let test = r.test_err.map_or(String::new(), |e| format!("{e:.17e}"));
            s.push_str(&format!("{},{:.17e},{:.17e},{}\n", r.epoch, r.lr, r.train_err, test));
        }
        s
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// Inputs and targets of the samples `idx`, restricted to the prepared points.
pub fn batch(ds: &Dataset, idx: &[usize], prep: &Prepared) -> Result<(Tensor, Tensor)> {
    let x = ds.inputs.gather(0, idx)?;
    let y = ds.outputs.gather(0, idx)?;
    Ok((prep.gather(&x)?, prep.gather(&y)?))
}

fn check_geometry(model: &OperatorModel, ds: &Dataset) -> Result<()> {
    let c = &model.config;
    if ds.grid.dim() != c.dim || ds.input_channels() != c.in_channels || ds.output_channels() != c.out_channels {
        return Err(Error::Config(format!(
            "{} model ({}-D, {} -> {} channels) does not match dataset ({}-D, {} -> {} channels)",
            c.arch.name(),
            c.dim,
            c.in_channels,
            c.out_channels,
            ds.grid.dim(),
            ds.input_channels(),
            ds.output_channels()
        )));
    }
    Ok(())
}

/// Mean relative error of `model` over `ds`, evaluated in chunks of `chunk` samples.
pub fn dataset_error(model: &OperatorModel, ds: &Dataset, chunk: usize, rng: &mut Rng) -> Result<f64> {
    check_geometry(model, ds)?;
    if ds.is_empty() {
        return Err(Error::Contract("error of an empty dataset".into()));
    }
    let mut total = 0.0;
    let n = ds.len();
    let mut start = 0;
    while start < n {
        let len = chunk.max(1).min(n - start);
        let part = ds.range(start, len)?;
        let pred = model.predict(&ds.grid, &part.inputs, rng)?;
        total += relative_l2_batch(&pred, &part.outputs)?.iter().sum::<f64>();
        start += len;
    }
    Ok(total / n as f64)
}

/// Trains in place. `on_epoch` sees every record with the current parameters and may abort by returning an error.
///
/// A non-finite loss or gradient aborts with a numeric error before the
/// offending update, so `model` keeps the last finite parameters.
pub fn train(
    model: &mut OperatorModel,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord, &OperatorModel) -> Result<()>,
) -> Result<History> {
    cfg.validate()?;
    check_geometry(model, train_set)?;
    if let Some(t) = test_set {
        check_geometry(model, t)?;
    }
    let mut history = History::default();
    if cfg.epochs == 0 {
        return Ok(history);
    }
    if train_set.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    let mut state = AdamState::default();
    let n = train_set.len();
    let (mut best, mut stale) = (f64::INFINITY, 0);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let mut rng = Rng::with_stream(cfg.seed, 1 + epoch as u64);
        let order = rng.permutation(n);
        let mut err_sum = 0.0;
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            let prep = model.prepare(&train_set.grid, &mut rng)?;
            let (x, y) = batch(train_set, idx, &prep)?;
            let tape = Tape::new();
            let p = model.params.bind(&tape, true);
            let pred = model.forward(&p, &prep, tape.constant(x))?;
            let loss = loss_var(cfg.loss, pred, &y)?;
            let lv = loss.value().item()?;
            if !lv.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}, batch {bi}")));
            }
            err_sum += match cfg.loss {
                Loss::RelativeL2 => lv * idx.len() as f64,
                Loss::Mse => relative_l2_batch(&pred.value(), &y)?.iter().sum(),
            };
            let grads = p.gradients(&tape.backward(loss)?);
            adam_step(&mut model.params, &grads, &mut state, lr, cfg.weight_decay)
                .map_err(|e| match e {
                    Error::Numeric(m) => Error::Numeric(format!("epoch {epoch}, batch {bi}: {m}")),
                    other => other,
                })?;
        }
        let last = epoch + 1 == cfg.epochs;
        let test_err = match test_set {
            Some(t) if last || (epoch + 1) % cfg.eval_every == 0 => {
                let mut erng = Rng::with_stream(cfg.seed, 0);
                Some(dataset_error(model, t, cfg.batch_size, &mut erng)?)
            }
            _ => None,
        };
        let rec = EpochRecord {
            epoch,
            lr,
            train_err: err_sum / n as f64,
            test_err,
        };
        on_epoch(&rec, model)?;
        history.records.push(rec);
        if cfg.patience > 0 {
            if let Some(e) = test_err {
                if e < best {
                    best = e;
                    stale = 0;
                } else {
                    stale += cfg.eval_every;
                    if stale >= cfg.patience {
                        break;
                    }
                }
            }
        }
    }
    Ok(history)
}
