//! Run configuration: a TOML file plus `section.key=value` overrides.
//!
//! Resolution order is file, then overrides, then per-problem defaults for
//! any measure or solver field left unset. The resolved configuration is what
//! every command writes next to its outputs, and it reproduces the run.

use std::path::{Path, PathBuf};

use nop_core::bayes::PcnConfig;
use nop_core::nop::ModelConfig;
use nop_core::pde::{DataSpec, Problem, SolverParams};
use nop_core::random::MeasureSpec;
use nop_core::train::TrainConfig;
use nop_core::{Error, Result};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "NOP_OUT_ROOT";
/// File name of the resolved configuration written with every run.
pub const RESOLVED_CONFIG: &str = "config.toml";

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<Problem>,
    #[serde(default)]
    pub n: usize,
    /// Source grid size before downsampling.
    #[serde(default)]
    pub resolution: usize,
    #[serde(default = "one")]
    pub downsample: usize,
    #[serde(default)]
    pub first_sample: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverParams>,
    /// Dataset directory read by train, eval and spectra.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Held-out dataset directory used during training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_path: Option<PathBuf>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            problem: None,
            n: 0,
            resolution: 0,
            downsample: 1,
            first_sample: 0,
            measure: None,
            solver: None,
            path: None,
            test_path: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Without a checkpoint the `model` section is instantiated from the run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// Datasets for a resolution sweep or super-resolution; defaults to `data.path`.
    #[serde(default)]
    pub datasets: Vec<PathBuf>,
    /// Input noise level of the robustness protocol; 0 skips it.
    #[serde(default)]
    pub noise_level: f64,
    /// Wavenumber band of the spectral slope fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<[usize; 2]>,
}

fn d_inv_res() -> usize {
    32
}
fn d_inv_t() -> f64 {
    1.0
}
fn d_inv_nu() -> f64 {
    1e-3
}
fn d_inv_dt() -> f64 {
    1e-2
}
fn d_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvertSection {
    #[serde(default = "d_inv_res")]
    pub resolution: usize,
    /// Observation time of the vorticity.
    #[serde(default = "d_inv_t")]
    pub t_end: f64,
    #[serde(default = "d_inv_nu")]
    pub viscosity: f64,
    #[serde(default = "d_inv_dt")]
    pub dt: f64,
    #[serde(default = "d_true")]
    pub forcing: bool,
    /// Checkpoint of a model mapping initial to final vorticity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surrogate: Option<PathBuf>,
    #[serde(default)]
    pub pcn: PcnConfig,
}

impl Default for InvertSection {
    fn default() -> Self {
        InvertSection {
            resolution: d_inv_res(),
            t_end: d_inv_t(),
            viscosity: d_inv_nu(),
            dt: d_inv_dt(),
            forcing: true,
            surrogate: None,
            pcn: PcnConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invert: Option<InvertSection>,
}

fn cfg_err(m: impl Into<String>) -> Error {
    Error::Config(m.into())
}

/// Parses the right-hand side of an override as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    match toml::from_str::<Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key v was just parsed"),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Applies one `a.b.c=value` override, creating intermediate tables.
pub fn apply_override(root: &mut Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| cfg_err(format!("override '{assignment}' is not of the form section.key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(cfg_err(format!("override '{assignment}' has an empty key")));
    }
    let mut table = root;
    for k in &keys[..keys.len() - 1] {
        let slot = table.entry(k.to_string()).or_insert_with(|| Value::Table(Table::new()));
        table = slot
            .as_table_mut()
            .ok_or_else(|| cfg_err(format!("override '{path}': '{k}' is not a table")))?;
    }
    table.insert(keys[keys.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

/// `over` merged into `base`, recursing through tables.
fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn to_table<T: Serialize>(v: &T) -> Table {
    Table::try_from(v).expect("config types serialize to TOML tables")
}

/// Fills unset measure and solver fields from the defaults of the chosen problem.
fn fill_problem_defaults(root: &mut Table) -> Result<()> {
    let Some(Value::Table(data)) = root.get_mut("data") else {
        return Ok(());
    };
    let Some(problem) = data.get("problem") else {
        return Ok(());
    };
    let name = problem.as_str().ok_or_else(|| cfg_err("data.problem must be a string"))?;
    let problem = Problem::parse(name).map_err(|_| {
        cfg_err(format!(
            "data.problem: unknown problem '{name}' (expected poisson, darcy, burgers, ns_onestep or ns_trajectory)"
        ))
    })?;
    for (key, defaults) in [
        ("measure", to_table(&problem.default_measure())),
        ("solver", to_table(&SolverParams::default_for(problem))),
    ] {
        let mut full = defaults;
        match data.remove(key) {
            Some(Value::Table(given)) => merge(&mut full, given),
            Some(_) => return Err(cfg_err(format!("data.{key} must be a table"))),
            None => {}
        }
        data.insert(key.to_string(), Value::Table(full));
    }
    Ok(())
}

impl RunConfig {
    /// Resolves TOML text and overrides into a validated configuration.
    pub fn resolve(text: &str, overrides: &[String]) -> Result<RunConfig> {
        let mut root: Table = toml::from_str(text).map_err(|e| cfg_err(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        fill_problem_defaults(&mut root)?;
        let seed = root.get("seed").cloned();
        if let (Some(seed), Some(Value::Table(train))) = (seed, root.get_mut("train")) {
            train.entry("seed").or_insert(seed);
        }
        let cfg: RunConfig = Value::Table(root)
            .try_into()
            .map_err(|e: toml::de::Error| cfg_err(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| cfg_err(format!("cannot read config {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::resolve(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(d) = &self.data {
            if let Some(m) = &d.measure {
                m.validate()?;
            }
            if d.downsample == 0 {
                return Err(cfg_err("data.downsample must be at least 1"));
            }
        }
        if let Some(m) = &self.model {
            m.validate()?;
        }
        if let Some(t) = &self.train {
            t.validate()?;
        }
        if let Some(i) = &self.invert {
            i.pcn.validate()?;
            if i.resolution < 8 || !(i.t_end > 0.0 && i.dt > 0.0 && i.viscosity > 0.0) {
                return Err(cfg_err("invert needs resolution >= 8 and positive t_end, dt and viscosity"));
            }
        }
        Ok(())
    }

    /// Data-generation spec of the `data` section.
    pub fn data_spec(&self) -> Result<DataSpec> {
        let d = self.data.as_ref().ok_or_else(|| cfg_err("gen-data needs a [data] section"))?;
        let problem = d.problem.ok_or_else(|| cfg_err("data.problem is required"))?;
        if d.resolution == 0 {
            return Err(cfg_err("data.resolution must be positive"));
        }
        let mut spec = DataSpec::new(problem, d.n, d.resolution, self.seed);
        spec.downsample = d.downsample;
        spec.first_sample = d.first_sample;
        spec.measure = d.measure.clone().unwrap_or_else(|| problem.default_measure());
        spec.solver = d.solver.clone().unwrap_or_else(|| SolverParams::default_for(problem));
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("resolved config serializes")
    }

    /// Output directory: `out`, else `$NOP_OUT_ROOT/<command>`, else `runs/<command>`.
    pub fn out_dir(&self, command: &str) -> PathBuf {
        if let Some(o) = &self.out {
            return o.clone();
        }
        let root = std::env::var_os(OUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
        root.join(command)
    }
}
