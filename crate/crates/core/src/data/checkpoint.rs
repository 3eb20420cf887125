//! Checkpoint directory: `meta.json` plus one little-endian f32 file per
//! parameter tensor.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::model::MbaNet;
use crate::nn::ParamStore;
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;
pub const META_FILE: &str = "meta.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub config: ModelConfig,
    pub epoch: usize,
    pub seed: u64,
    pub tensors: Vec<TensorEntry>,
}

pub fn save(dir: &Path, config: &ModelConfig, epoch: usize, seed: u64, store: &ParamStore<f32>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tensors = Vec::with_capacity(store.len());
    for (_, name, t) in store.iter() {
        let file = format!("{name}.bin");
        let bytes: Vec<u8> = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        let path = dir.join(&file);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        tensors.push(TensorEntry { name: name.to_string(), shape: t.shape().to_vec(), file });
    }
    let meta = CheckpointMeta { format_version: FORMAT_VERSION, config: config.clone(), epoch, seed, tensors };
    let path = dir.join(META_FILE);
    fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::io(&path, e))
}

pub fn read_meta(dir: &Path) -> Result<CheckpointMeta> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: CheckpointMeta =
        serde_json::from_str(&text).map_err(|e| Error::CheckpointFormat(format!("{}: {e}", path.display())))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::CheckpointFormat(format!(
            "version {} is not supported (expected {FORMAT_VERSION})",
            meta.format_version
        )));
    }
    Ok(meta)
}

/// Overwrite every tensor of `store` from the checkpoint. Each stored
/// tensor must be listed with the same shape and a file of matching size.
pub fn load_into(dir: &Path, store: &mut ParamStore<f32>) -> Result<CheckpointMeta> {
    let meta = read_meta(dir)?;
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let name = store.name(id).to_string();
        let err = |detail: String| Error::Checkpoint { tensor: name.clone(), detail };
        let entry = meta
            .tensors
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| err("missing from checkpoint".into()))?;
        let expected = store.get(id).shape().to_vec();
        if entry.shape != expected {
            return Err(err(format!("shape {:?} in checkpoint, model expects {expected:?}", entry.shape)));
        }
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let numel: usize = expected.iter().product();
        if bytes.len() != 4 * numel {
            return Err(err(format!("file holds {} bytes, expected {}", bytes.len(), 4 * numel)));
        }
        let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        store.set(id, Tensor::new(expected, data)?)?;
    }
    if let Some(extra) = meta.tensors.iter().find(|e| store.id_of(&e.name).is_none()) {
        return Err(Error::Checkpoint { tensor: extra.name.clone(), detail: "not a parameter of this model".into() });
    }
    Ok(meta)
}

/// Rebuild the model recorded in `meta.json` and load its parameters.
pub fn load(dir: &Path) -> Result<(MbaNet, ParamStore<f32>, CheckpointMeta)> {
    let meta = read_meta(dir)?;
    let (model, mut store) = MbaNet::init::<f32>(&meta.config, meta.seed)?;
    let meta = load_into(dir, &mut store)?;
    Ok((model, store, meta))
}
