//! On-disk artifacts: a JSON manifest next to raw little-endian `f64` blocks.
//!
//! Every block is listed in the manifest with its shape and SHA-256, and the
//! manifest carries a content hash over all blocks plus the provenance that
//! produced them, so two artifacts are byte-identical exactly when their
//! hashes agree.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nop::{ModelConfig, OperatorModel, ParamStore};
use crate::pde::{Dataset, DatasetManifest, Grid};
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockEntry {
    pub name: String,
    pub file: String,
    pub shape: Vec<usize>,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest<M> {
    pub format_version: u32,
    pub kind: String,
    pub meta: M,
    pub blocks: Vec<BlockEntry>,
    /// SHA-256 over the canonical `meta` JSON followed by every block's bytes in order.
    pub content_hash: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `blocks` as `<name>.bin` files and the manifest describing them.
pub fn write_artifact<M: Serialize>(dir: &Path, kind: &str, meta: &M, blocks: &[(&str, &Tensor)]) -> Result<Manifest<M>>
where
    M: Clone,
{
    fs::create_dir_all(dir)?;
    let meta_json = serde_json::to_vec(meta).map_err(|e| Error::Format(e.to_string()))?;
    let mut total = Sha256::new();
    total.update(&meta_json);
    let mut entries = Vec::with_capacity(blocks.len());
    for (name, t) in blocks {
        let bytes = t.to_le_bytes();
        total.update(&bytes);
        let file = format!("{name}.bin");
        fs::write(dir.join(&file), &bytes)?;
        entries.push(BlockEntry {
            name: name.to_string(),
            file,
            shape: t.shape().to_vec(),
            sha256: sha256_hex(&bytes),
        });
    }
    let m = Manifest {
        format_version: FORMAT_VERSION,
        kind: kind.to_string(),
        meta: meta.clone(),
        blocks: entries,
        content_hash: hex::encode(total.finalize()),
    };
    let text = serde_json::to_string_pretty(&m).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(dir.join(MANIFEST), text + "\n")?;
    Ok(m)
}

/// Reads and verifies an artifact written by [`write_artifact`].
pub fn read_artifact<M: DeserializeOwned>(dir: &Path, kind: &str) -> Result<(Manifest<M>, Vec<(String, Tensor)>)> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let probe: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let version = probe.get("format_version").and_then(|v| v.as_u64());
    if version != Some(FORMAT_VERSION as u64) {
        return Err(Error::Format(format!(
            "{}: format version {version:?} is not the supported {FORMAT_VERSION}",
            path.display()
        )));
    }
    let found = probe.get("kind").and_then(|v| v.as_str()).unwrap_or("unknown");
    if found != kind {
        return Err(Error::Config(format!("{} holds a {found} artifact, expected {kind}", dir.display())));
    }
    let m: Manifest<M> = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut out = Vec::with_capacity(m.blocks.len());
    for b in &m.blocks {
        let bytes = fs::read(dir.join(&b.file))?;
        if sha256_hex(&bytes) != b.sha256 {
            return Err(Error::Format(format!("block {} fails its checksum", b.file)));
        }
        out.push((b.name.clone(), Tensor::from_le_bytes(&b.shape, &bytes)?));
    }
    Ok((m, out))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub provenance: DatasetManifest,
    pub grid: Grid,
}

pub fn save_dataset(dir: &Path, ds: &Dataset) -> Result<Manifest<DatasetMeta>> {
    let meta = DatasetMeta {
        provenance: ds.manifest.clone(),
        grid: ds.grid.clone(),
    };
    write_artifact(dir, "dataset", &meta, &[("inputs", &ds.inputs), ("outputs", &ds.outputs)])
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let (m, blocks) = read_artifact::<DatasetMeta>(dir, "dataset")?;
    let mut inputs = None;
    let mut outputs = None;
    for (name, t) in blocks {
        match name.as_str() {
            "inputs" => inputs = Some(t),
            "outputs" => outputs = Some(t),
            other => return Err(Error::Format(format!("unexpected dataset block '{other}'"))),
        }
    }
    let missing = |w: &str| Error::Format(format!("dataset in {} lacks its {w} block", dir.display()));
    Ok(Dataset {
        manifest: m.meta.provenance,
        grid: m.meta.grid,
        inputs: inputs.ok_or_else(|| missing("inputs"))?,
        outputs: outputs.ok_or_else(|| missing("outputs"))?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub seed: u64,
    /// Epochs completed.
    pub epoch: usize,
    /// Resolution of the training data.
    pub train_resolution: usize,
}

pub fn save_checkpoint(dir: &Path, model: &OperatorModel, meta: &CheckpointMeta) -> Result<Manifest<CheckpointMeta>> {
    let blocks: Vec<(&str, &Tensor)> = model.params.iter().collect();
    write_artifact(dir, "checkpoint", meta, &blocks)
}

pub fn load_checkpoint(dir: &Path) -> Result<(OperatorModel, CheckpointMeta)> {
    let (m, blocks) = read_artifact::<CheckpointMeta>(dir, "checkpoint")?;
    let fresh = OperatorModel::new(m.meta.model.clone(), m.meta.seed)?;
    let mut params = ParamStore::new();
    for (name, t) in blocks {
        let want = fresh.params.get(&name).map_err(|_| Error::Format(format!("checkpoint has unknown parameter '{name}'")))?;
        if want.shape() != t.shape() {
            return Err(Error::Format(format!("parameter '{name}' has shape {:?}, model expects {:?}", t.shape(), want.shape())));
        }
        params.insert(name, t)?;
    }
    if params.len() != fresh.params.len() {
        return Err(Error::Format(format!(
            "checkpoint holds {} of the model's {} parameters",
            params.len(),
            fresh.params.len()
        )));
    }
    Ok((
        OperatorModel {
            config: m.meta.model.clone(),
            params,
        },
        m.meta,
    ))
}

/// Short stable identifier of a model: hash of its config and parameter bytes.
pub fn model_fingerprint(model: &OperatorModel) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&model.config).expect("config serializes"));
    for (name, t) in model.params.iter() {
        h.update(name.as_bytes());
        h.update(t.to_le_bytes());
    }
    hex::encode(h.finalize())[..16].to_string()
}
