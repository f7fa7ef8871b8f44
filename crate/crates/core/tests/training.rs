//! Optimizer and training-loop checks against scalar references and synthetic tasks.

mod common;

use std::collections::BTreeMap;

use common::{tiny_fno, toy};
use nop_core::nop::{OperatorModel, ParamStore};
use nop_core::pde::{build_dataset, DataSpec, Problem};
use nop_core::train::{adam_step, dataset_error, train, AdamState, History, Loss, TrainConfig};
use nop_core::{Error, Rng, Tensor};
use proptest::prelude::*;

fn scalar_store(x: f64) -> ParamStore {
    let mut p = ParamStore::new();
    p.insert("w", Tensor::new(&[1], vec![x]).unwrap()).unwrap();
    p
}

fn grad(g: f64) -> BTreeMap<String, Tensor> {
    BTreeMap::from([("w".to_string(), Tensor::new(&[1], vec![g]).unwrap())])
}

fn w(p: &ParamStore) -> f64 {
    p.get("w").unwrap().data()[0]
}

/// Bias-corrected Adam on one scalar, written out step by step.
fn adam_reference(gs: &[f64], lr: f64) -> f64 {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let (mut m, mut v, mut x) = (0.0, 0.0, 0.0);
    for (t, g) in gs.iter().enumerate() {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mh = m / (1.0 - b1.powi(t as i32 + 1));
        let vh = v / (1.0 - b2.powi(t as i32 + 1));
        x -= lr * mh / (vh.sqrt() + eps);
    }
    x
}

#[test]
fn adam_first_step_matches_scalar_reference() {
    let mut p = scalar_store(0.0);
    let mut s = AdamState::default();
    adam_step(&mut p, &grad(1.0), &mut s, 1e-3, 0.0).unwrap();
    assert!((w(&p) - adam_reference(&[1.0], 1e-3)).abs() < 1e-18);
    assert!((w(&p) + 9.99999995e-4).abs() < 1e-11);
    assert_eq!(s.step, 1);
}

#[test]
fn adam_opposite_gradients_stay_within_two_steps() {
    let mut p = scalar_store(0.0);
    let mut s = AdamState::default();
    adam_step(&mut p, &grad(1.0), &mut s, 1e-3, 0.0).unwrap();
    adam_step(&mut p, &grad(-1.0), &mut s, 1e-3, 0.0).unwrap();
    assert!(w(&p).abs() < 2e-3);
    assert!((w(&p) - adam_reference(&[1.0, -1.0], 1e-3)).abs() < 1e-18);
}

proptest! {
    #[test]
    fn learning_rate_halves_on_schedule(lr in 1e-6f64..1.0, every in 1usize..200, epoch in 0usize..2000) {
        let cfg = TrainConfig { initial_lr: lr, halve_every: every, ..TrainConfig::default() };
        let mut want = lr;
        for _ in 0..epoch / every {
            want /= 2.0;
        }
        prop_assert_eq!(cfg.lr_at(epoch), want);
    }
}

fn triple(a: &Tensor) -> Tensor {
    a.scale(3.0)
}

fn quiet() -> impl FnMut(&nop_core::train::EpochRecord, &OperatorModel) -> nop_core::Result<()> {
    |_, _| Ok(())
}

#[test]
fn zero_epochs_leave_model_unchanged() {
    let ds = toy(4, 32, 1, triple);
    let mut m = OperatorModel::new(tiny_fno(), 2).unwrap();
    let before = m.clone();
    let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
    let h = train(&mut m, &ds, None, &cfg, &mut quiet()).unwrap();
    assert!(h.records.is_empty());
    assert_eq!(m.params, before.params);
}

#[test]
fn linear_task_is_learned_and_error_decreases() {
    let tr = toy(40, 64, 11, triple);
    let te = toy(20, 64, 12, triple);
    let mut m = OperatorModel::new(tiny_fno(), 3).unwrap();
    let cfg = TrainConfig { epochs: 200, batch_size: 10, seed: 4, ..TrainConfig::default() };
    let h = train(&mut m, &tr, Some(&te), &cfg, &mut quiet()).unwrap();
    assert!(h.records.iter().all(|r| r.train_err.is_finite()));
    let final_train = dataset_error(&m, &tr, 20, &mut Rng::new(0)).unwrap();
    assert!(final_train < 0.01, "train error {final_train}");
    let at = |e: usize| h.records[e - 1].test_err.unwrap();
    assert!(at(100) <= at(50) && at(200) <= at(100), "{} {} {}", at(50), at(100), at(200));
}

#[test]
fn fixed_seed_gives_identical_history() {
    let tr = toy(12, 32, 5, triple);
    let te = toy(4, 32, 6, triple);
    let cfg = TrainConfig { epochs: 6, batch_size: 5, seed: 9, ..TrainConfig::default() };
    let run = || -> (History, ParamStore) {
        let mut m = OperatorModel::new(tiny_fno(), 8).unwrap();
        let h = train(&mut m, &tr, Some(&te), &cfg, &mut quiet()).unwrap();
        (h, m.params)
    };
    let (h1, p1) = run();
    let (h2, p2) = run();
    assert_eq!(h1, h2);
    assert_eq!(p1, p2);
    assert_eq!(h1.to_csv().lines().next(), Some("epoch,lr,train_err,test_err"));
}

#[test]
fn non_finite_loss_aborts_before_update() {
    let mut ds = toy(4, 32, 1, triple);
    ds.inputs.data_mut()[5] = f64::NAN;
    let mut m = OperatorModel::new(tiny_fno(), 2).unwrap();
    let before = m.params.clone();
    let cfg = TrainConfig { epochs: 3, batch_size: 4, ..TrainConfig::default() };
    let e = train(&mut m, &ds, None, &cfg, &mut quiet()).unwrap_err();
    assert!(matches!(e, Error::Numeric(_)), "{e}");
    assert_eq!(m.params, before);
}

#[test]
fn relative_loss_beats_mse_on_burgers_toy() {
    let mut spec = DataSpec::new(Problem::Burgers, 80, 512, 21);
    spec.downsample = 4;
    let all = build_dataset(&spec).unwrap();
    let tr = all.range(0, 60).unwrap();
    let te = all.range(60, 20).unwrap();
    let mut errs = Vec::new();
    for loss in [Loss::RelativeL2, Loss::Mse] {
        let mut m = OperatorModel::new(tiny_fno(), 13).unwrap();
        let cfg = TrainConfig { epochs: 60, batch_size: 10, seed: 2, loss, ..TrainConfig::default() };
        let h = train(&mut m, &tr, Some(&te), &cfg, &mut quiet()).unwrap();
        assert!(h.records.iter().all(|r| r.train_err.is_finite()));
        errs.push(h.last().unwrap().test_err.unwrap());
    }
    assert!(errs[0] <= errs[1], "relative {} vs mse {}", errs[0], errs[1]);
}
