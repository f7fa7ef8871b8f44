//! The `nop` binary: exit codes, error messages and replay from the resolved configuration.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nop_cli::config::{DataSection, EvalSection};
use nop_cli::RunConfig;
use nop_core::nop::{Arch, ModelConfig};
use nop_core::pde::Problem;
use nop_core::train::TrainConfig;

fn nop(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nop")).args(args).current_dir(dir).output().unwrap()
}

fn write_config(dir: &Path, name: &str, cfg: &RunConfig) -> String {
    let p = dir.join(name);
    fs::write(&p, cfg.to_toml()).unwrap();
    p.display().to_string()
}

fn burgers(n: usize, resolution: usize) -> RunConfig {
    RunConfig {
        seed: 4,
        data: Some(DataSection {
            problem: Some(Problem::Burgers),
            n,
            resolution,
            ..DataSection::default()
        }),
        ..RunConfig::default()
    }
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_problem_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nop(&["gen-data", "--set", "data.problem=heat", "--set", "data.n=2", "--out", "x"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown problem 'heat'"), "{}", stderr(&o));
}

#[test]
fn malformed_override_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nop(&["gen-data", "--set", "data.n", "--out", "x"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("section.key=value"), "{}", stderr(&o));
}

#[test]
fn train_without_model_section_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &burgers(2, 32));
    assert!(nop(&["gen-data", "-c", &cfg, "--out", "data"], tmp.path()).status.success());
    let o = nop(&["train", "--set", "data.path=\"data\"", "--out", "run"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("[model]"), "{}", stderr(&o));
}

#[test]
fn resolved_config_replays_the_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &burgers(3, 64));
    assert!(nop(&["gen-data", "-c", &cfg, "--set", "data.downsample=2", "--out", "a"], tmp.path()).status.success());
    let resolved = tmp.path().join("a/config.toml").display().to_string();
    assert!(nop(&["gen-data", "-c", &resolved, "--out", "b"], tmp.path()).status.success());
    for entry in fs::read_dir(tmp.path().join("a")).unwrap() {
        let name = entry.unwrap().file_name();
        if name == "config.toml" {
            continue;
        }
        let a = fs::read(tmp.path().join("a").join(&name)).unwrap();
        let b = fs::read(tmp.path().join("b").join(&name)).unwrap();
        assert_eq!(a, b, "{name:?}");
    }
}

#[test]
fn deeponet_superresolution_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert!(nop(&["gen-data", "-c", &write_config(dir, "a.toml", &burgers(2, 32)), "--out", "coarse"], dir).status.success());
    assert!(nop(&["gen-data", "-c", &write_config(dir, "b.toml", &burgers(2, 64)), "--out", "fine"], dir).status.success());
    let mut model = ModelConfig::fno_1d();
    model.arch = Arch::DeepOnet {
        sensors: 32,
        basis: 4,
        hidden: 8,
        depth: 2,
    };
    let train = RunConfig {
        data: Some(DataSection {
            path: Some(dir.join("coarse")),
            ..DataSection::default()
        }),
        model: Some(model),
        train: Some(TrainConfig {
            epochs: 1,
            batch_size: 2,
            ..TrainConfig::default()
        }),
        ..RunConfig::default()
    };
    assert!(nop(&["train", "-c", &write_config(dir, "t.toml", &train), "--out", "run"], dir).status.success());
    let sr = RunConfig {
        eval: Some(EvalSection {
            checkpoint: Some(dir.join("run/checkpoint")),
            datasets: vec![dir.join("fine")],
            ..EvalSection::default()
        }),
        ..RunConfig::default()
    };
    let o = nop(&["superres", "-c", &write_config(dir, "s.toml", &sr), "--out", "sr"], dir);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("fixed-sensor"), "{}", stderr(&o));
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        let cfg = RunConfig::load(Some(&p), &[]).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert!(cfg.model.is_some() && cfg.train.is_some(), "{}", p.display());
    }
}
