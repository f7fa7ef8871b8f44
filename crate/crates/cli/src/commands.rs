//! Command implementations. Each writes its resolved configuration first, then its artifacts.

use std::cell::RefCell;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nop_core::bayes::{as_field, invert_compare, observe, pcn_chain, ChainResult, PcnConfig};
use nop_core::eval::{compare_spectra, default_band, resolution_sweep, robustness, superresolution};
use nop_core::io::{load_checkpoint, load_dataset, save_checkpoint, save_dataset, write_artifact, CheckpointMeta};
use nop_core::nop::OperatorModel;
use nop_core::pde::{build_dataset, solve_navier_stokes, NsOptions};
use nop_core::random::{sample_grf, MeasureSpec};
use nop_core::spectral::spectrum;
use nop_core::train::{train, EpochRecord, History, TrainConfig};
use nop_core::{Dataset, Error, FieldSample, Grid, Result, Rng, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, RESOLVED_CONFIG};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    GenData,
    Train,
    Eval,
    Superres,
    Invert,
    Spectra,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Superres => "superres",
            Command::Invert => "invert",
            Command::Spectra => "spectra",
        }
    }
}

/// A failed command with the most recent checkpoint it left behind, if any.
#[derive(Debug)]
pub struct Failure {
    pub error: Error,
    pub last_checkpoint: Option<PathBuf>,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Failure {
            error,
            last_checkpoint: None,
        }
    }
}

/// 3 for numerical failures, 2 for everything the user can fix in the inputs.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

fn cfg_err(m: impl Into<String>) -> Error {
    Error::Config(m.into())
}

fn existing(p: &Path, what: &str) -> Result<PathBuf> {
    if p.exists() {
        Ok(p.to_path_buf())
    } else {
        Err(cfg_err(format!("{what} {} does not exist", p.display())))
    }
}

fn open_dataset(p: &Path) -> Result<Dataset> {
    load_dataset(&existing(p, "dataset")?)
}

fn open_checkpoint(p: &Path) -> Result<(OperatorModel, CheckpointMeta)> {
    load_checkpoint(&existing(p, "checkpoint")?)
}

/// Runs `cmd` and returns a short human-readable summary.
pub fn run(cmd: Command, cfg: &RunConfig) -> std::result::Result<String, Failure> {
    let out = cfg.out_dir(cmd.name());
    fs::create_dir_all(&out).map_err(Error::from)?;
    fs::write(out.join(RESOLVED_CONFIG), cfg.to_toml()).map_err(Error::from)?;
    match cmd {
        Command::GenData => gen_data(cfg, &out).map_err(Failure::from),
        Command::Train => train_cmd(cfg, &out),
        Command::Eval => eval_cmd(cfg, &out).map_err(Failure::from),
        Command::Superres => superres_cmd(cfg, &out).map_err(Failure::from),
        Command::Invert => invert_cmd(cfg, &out).map_err(Failure::from),
        Command::Spectra => spectra_cmd(cfg, &out).map_err(Failure::from),
    }
}

fn gen_data(cfg: &RunConfig, out: &Path) -> Result<String> {
    let spec = cfg.data_spec()?;
    let ds = build_dataset(&spec)?;
    let m = save_dataset(out, &ds)?;
    Ok(format!(
        "{} samples of {} at s = {} written to {} (content {})",
        ds.len(),
        spec.problem.name(),
        ds.manifest.resolution,
        out.display(),
        &m.content_hash[..16]
    ))
}

fn data_path(cfg: &RunConfig) -> Result<&Path> {
    cfg.data
        .as_ref()
        .and_then(|d| d.path.as_deref())
        .ok_or_else(|| cfg_err("data.path is required"))
}

fn train_cmd(cfg: &RunConfig, out: &Path) -> std::result::Result<String, Failure> {
    let model_cfg = cfg.model.clone().ok_or_else(|| cfg_err("train needs a [model] section"))?;
    let tcfg = cfg.train.clone().unwrap_or(TrainConfig {
        seed: cfg.seed,
        ..TrainConfig::default()
    });
    let train_set = open_dataset(data_path(cfg)?)?;
    let test_set = match cfg.data.as_ref().and_then(|d| d.test_path.as_deref()) {
        Some(p) => Some(open_dataset(p)?),
        None => None,
    };
    let mut model = OperatorModel::new(model_cfg, cfg.seed)?;
    let meta0 = CheckpointMeta {
        model: model.config.clone(),
        seed: cfg.seed,
        epoch: 0,
        train_resolution: train_set.grid.sizes[0],
    };
    let records = RefCell::new(Vec::<EpochRecord>::new());
    let last = RefCell::new(None::<PathBuf>);
    let result = {
        let mut on_epoch = |r: &EpochRecord, m: &OperatorModel| -> Result<()> {
            records.borrow_mut().push(r.clone());
            let done = r.epoch + 1;
            if tcfg.checkpoint_every > 0 && done % tcfg.checkpoint_every == 0 {
                let dir = out.join("checkpoints").join(format!("epoch_{done:05}"));
                save_checkpoint(&dir, m, &CheckpointMeta { epoch: done, ..meta0.clone() })?;
                *last.borrow_mut() = Some(dir);
            }
            Ok(())
        };
        train(&mut model, &train_set, test_set.as_ref(), &tcfg, &mut on_epoch)
    };
    let history = History {
        records: records.into_inner(),
    };
    fs::write(out.join("history.csv"), history.to_csv()).map_err(Error::from)?;
    if let Err(error) = result {
        return Err(Failure {
            error,
            last_checkpoint: last.into_inner(),
        });
    }
    let dir = out.join("checkpoint");
    save_checkpoint(&dir, &model, &CheckpointMeta { epoch: history.records.len(), ..meta0 })?;
    let mut s = format!("{} epochs; checkpoint {}", history.records.len(), dir.display());
    if let Some(r) = history.last() {
        write!(s, "; final train error {:.4e}", r.train_err).unwrap();
        if let Some(t) = r.test_err {
            write!(s, ", test error {t:.4e}").unwrap();
        }
    }
    Ok(s)
}

/// The checkpointed model, or a fresh one from the `model` section.
fn eval_model(cfg: &RunConfig) -> Result<(OperatorModel, Option<CheckpointMeta>)> {
    match cfg.eval.as_ref().and_then(|e| e.checkpoint.as_deref()) {
        Some(p) => open_checkpoint(p).map(|(m, meta)| (m, Some(meta))),
        None => {
            let c = cfg.model.clone().ok_or_else(|| cfg_err("eval needs eval.checkpoint or a [model] section"))?;
            Ok((OperatorModel::new(c, cfg.seed)?, None))
        }
    }
}

fn eval_datasets(cfg: &RunConfig) -> Result<Vec<Dataset>> {
    let listed = cfg.eval.as_ref().map(|e| e.datasets.clone()).unwrap_or_default();
    let paths = if listed.is_empty() { vec![data_path(cfg)?.to_path_buf()] } else { listed };
    paths.iter().map(|p| open_dataset(p)).collect()
}

fn eval_cmd(cfg: &RunConfig, out: &Path) -> Result<String> {
    let (model, _) = eval_model(cfg)?;
    let sets = eval_datasets(cfg)?;
    let mut rng = Rng::with_stream(cfg.seed, 0xe7a1);
    let report = resolution_sweep(&model, &sets, &mut rng)?;
    fs::write(out.join("report.csv"), report.to_csv())?;
    let table = report.to_table();
    fs::write(out.join("report.txt"), &table)?;
    let mut s = table;
    let level = cfg.eval.as_ref().map_or(0.0, |e| e.noise_level);
    if level > 0.0 {
        let r = robustness(&model, &sets[0], level, &mut rng)?;
        fs::write(
            out.join("robustness.csv"),
            format!("level,clean,noisy,gap\n{level},{:.17e},{:.17e},{:.17e}\n", r.clean, r.noisy, r.gap()),
        )?;
        write!(s, "noise {level}: clean {:.4e}, noisy {:.4e}", r.clean, r.noisy).unwrap();
    }
    Ok(s)
}

fn superres_cmd(cfg: &RunConfig, out: &Path) -> Result<String> {
    let path = cfg
        .eval
        .as_ref()
        .and_then(|e| e.checkpoint.as_deref())
        .ok_or_else(|| cfg_err("superres needs eval.checkpoint"))?;
    let (model, meta) = open_checkpoint(path)?;
    let mut rng = Rng::with_stream(cfg.seed, 0xe7a1);
    let mut csv = String::from("train_resolution,resolution,samples,error\n");
    for ds in eval_datasets(cfg)? {
        let e = superresolution(&model, &ds, &mut rng)?;
        writeln!(csv, "{},{},{},{:.17e}", meta.train_resolution, e.resolution, e.samples, e.error).unwrap();
    }
    fs::write(out.join("superres.csv"), &csv)?;
    Ok(csv)
}

/// Snapshot `t` of sample `i` of stacked fields `(B, s, s, T)`.
fn snapshot(grid: &Grid, stacked: &Tensor, i: usize, t: usize) -> Result<FieldSample> {
    let sizes = stacked.shape();
    let v = stacked.slice(0, i, 1)?.slice(3, t, 1)?.reshape(&[sizes[1], sizes[2], 1])?;
    FieldSample::new(grid.clone(), v)
}

fn spectra_cmd(cfg: &RunConfig, out: &Path) -> Result<String> {
    let ds = open_dataset(data_path(cfg)?)?;
    if ds.grid.dim() != 2 || !ds.grid.periodic.iter().all(|&p| p) {
        return Err(cfg_err("spectra needs a dataset on the 2-D torus"));
    }
    let predicted = match cfg.eval.as_ref().and_then(|e| e.checkpoint.as_deref()) {
        Some(p) => {
            let (m, _) = open_checkpoint(p)?;
            Some(m.predict(&ds.grid, &ds.inputs, &mut Rng::with_stream(cfg.seed, 0xe7a1))?)
        }
        None => None,
    };
    let band = cfg
        .eval
        .as_ref()
        .and_then(|e| e.band)
        .map_or_else(|| default_band(ds.grid.sizes[0]), |[a, b]| (a, b));
    let dir = out.join("spectra");
    fs::create_dir_all(&dir)?;
    let mut csv = String::from("sample,snapshot,truth_slope,predicted_slope\n");
    let fmt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.6}"));
    let mut slopes = Vec::new();
    for i in 0..ds.len() {
        for t in 0..ds.output_channels() {
            let truth = snapshot(&ds.grid, &ds.outputs, i, t)?;
            let tp = spectrum(&truth.values)?;
            fs::write(dir.join(format!("truth_{i:04}_{t:03}.txt")), tp.to_text())?;
            let ts = tp.fit_slope(band.0, band.1).ok();
            let ps = match &predicted {
                Some(p) => {
                    let pred = snapshot(&ds.grid, p, i, t)?;
                    let c = compare_spectra(std::slice::from_ref(&pred), std::slice::from_ref(&truth), Some(band))?;
                    fs::write(dir.join(format!("predicted_{i:04}_{t:03}.txt")), c.predicted.to_text())?;
                    c.predicted_slope
                }
                None => None,
            };
            slopes.extend(ts);
            writeln!(csv, "{i},{t},{},{}", fmt(ts), fmt(ps)).unwrap();
        }
    }
    fs::write(out.join("slopes.csv"), &csv)?;
    let mean = slopes.iter().sum::<f64>() / slopes.len().max(1) as f64;
    Ok(format!(
        "{} snapshot spectra in {}; mean truth slope over [{}, {}]: {mean:.3}",
        ds.len() * ds.output_channels(),
        dir.display(),
        band.0,
        band.1
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosteriorMeta {
    pub forward_map: String,
    pub resolution: usize,
    pub pcn: PcnConfig,
    pub acceptance: f64,
    pub forward_calls: usize,
}

fn write_posterior(dir: &Path, name: &str, grid: &Grid, pcn: &PcnConfig, c: &ChainResult) -> Result<()> {
    let s = grid.sizes[0];
    let mean = c.mean.reshape(&[s, s, 1])?;
    let mut data = Vec::with_capacity(c.samples.len() * s * s);
    for w in &c.samples {
        data.extend_from_slice(w.data());
    }
    let samples = Tensor::new(&[c.samples.len(), s, s, 1], data)?;
    let meta = PosteriorMeta {
        forward_map: name.to_string(),
        resolution: s,
        pcn: pcn.clone(),
        acceptance: c.acceptance,
        forward_calls: c.forward_calls,
    };
    write_artifact(&dir.join(format!("posterior_{name}")), "posterior", &meta, &[("mean", &mean), ("samples", &samples)])?;
    Ok(())
}

fn invert_cmd(cfg: &RunConfig, out: &Path) -> Result<String> {
    let inv = cfg.invert.clone().unwrap_or_default();
    let grid = Grid::torus(inv.resolution)?;
    let prior_spec = MeasureSpec::ns_vorticity_ic();
    let mut prior = |rng: &mut Rng| Ok(sample_grf(&prior_spec, &grid, rng)?.values);
    let opts = NsOptions {
        dt: inv.dt,
        forcing: inv.forcing,
    };
    let mut solver = |w: &Tensor| -> Result<Vec<f64>> {
        let f = as_field(&grid, w)?;
        let traj = solve_navier_stokes(&f, inv.t_end, inv.viscosity, inv.t_end, &opts)?;
        observe(traj.last().expect("final record"))
    };
    let surrogate_model = match &inv.surrogate {
        Some(p) => {
            let (m, _) = open_checkpoint(p)?;
            let c = &m.config;
            if c.dim != 2 || c.in_channels != 1 {
                return Err(cfg_err(format!(
                    "surrogate must map one 2-D vorticity field, got dim {} with {} input channels",
                    c.dim, c.in_channels
                )));
            }
            Some(m)
        }
        None => None,
    };
    let s = inv.resolution;
    let mut truth_rng = Rng::with_stream(cfg.seed, 0x7275_7468);
    let truth = prior(&mut truth_rng)?;
    let clean = solver(&truth)?;
    let sd = inv.pcn.misfit_weight().sqrt().recip();
    let y: Vec<f64> = clean.iter().map(|v| v + sd * truth_rng.normal()).collect();
    let init = Tensor::zeros(truth.shape());
    let chain_rng = Rng::with_stream(cfg.seed, 1);
    let mut obs = String::from("x,y,observed,noise_free\n");
    for (k, [px, py]) in nop_core::bayes::observation_points().into_iter().enumerate() {
        writeln!(obs, "{px},{py},{:.17e},{:.17e}", y[k], clean[k]).unwrap();
    }
    fs::write(out.join("observations.csv"), obs)?;
    write_artifact(&out.join("truth"), "field", &s, &[("w0", &truth)])?;
    let mut summary = String::new();
    let report = |name: &str, c: &ChainResult, summary: &mut String| {
        writeln!(summary, "{name}: acceptance {:.3}, {:.3e} s per forward call", c.acceptance, c.seconds_per_call()).unwrap();
        if let Some(w) = &c.warning {
            eprintln!("warning ({name} chain): {w}");
        }
    };
    match surrogate_model {
        Some(m) => {
            let mut surrogate = |w: &Tensor| -> Result<Vec<f64>> {
                let pred = m.predict(&grid, &w.reshape(&[1, s, s, 1])?, &mut Rng::new(0))?;
                let c = pred.shape()[3];
                let last = pred.slice(3, c - 1, 1)?.reshape(&[s, s, 1])?;
                observe(&FieldSample::new(grid.clone(), last)?)
            };
            let cmp = invert_compare(&inv.pcn, &y, &mut solver, &mut surrogate, &mut prior, init, &chain_rng)?;
            write_posterior(out, "solver", &grid, &inv.pcn, &cmp.solver)?;
            write_posterior(out, "surrogate", &grid, &inv.pcn, &cmp.surrogate)?;
            fs::write(out.join("timing.csv"), cmp.timing_csv())?;
            report("solver", &cmp.solver, &mut summary);
            report("surrogate", &cmp.surrogate, &mut summary);
            writeln!(summary, "relative L2 between posterior means: {:.4e}", cmp.mean_rel_diff).unwrap();
        }
        None => {
            let c = pcn_chain(&inv.pcn, &y, &mut solver, &mut prior, init, &mut chain_rng.clone())?;
            write_posterior(out, "solver", &grid, &inv.pcn, &c)?;
            fs::write(
                out.join("timing.csv"),
                format!(
                    "map,calls,seconds,seconds_per_call,acceptance\nsolver,{},{:.6e},{:.6e},{:.6}\n",
                    c.forward_calls,
                    c.forward_seconds,
                    c.seconds_per_call(),
                    c.acceptance
                ),
            )?;
            report("solver", &c, &mut summary);
        }
    }
    let mean_err = |dir: &str| -> Result<f64> {
        let (_, blocks) = nop_core::io::read_artifact::<PosteriorMeta>(&out.join(dir), "posterior")?;
        let mean = blocks[0].1.reshape(truth.shape())?;
        Ok(mean.sub(&truth)?.norm() / truth.norm())
    };
    writeln!(summary, "solver posterior mean vs truth: {:.4e}", mean_err("posterior_solver")?).unwrap();
    fs::write(out.join("summary.txt"), &summary)?;
    Ok(summary)
}
